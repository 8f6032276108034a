// Command-line front end: simulate | test | breaks | cluster | cidr | null.
// Reports are JSON on stdout; failures print {"error": ...} on stderr and
// exit nonzero. All randomness flows from --seed.
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pecusum/breaks.hpp"
#include "pecusum/cusum.hpp"
#include "pecusum/io.hpp"
#include "pecusum/nulldist.hpp"
#include "pecusum/panel.hpp"
#include "pecusum/simulate.hpp"

namespace {

using nlohmann::json;
using namespace pecusum;

struct DataOptions {
    std::string path;
    std::string layout = "long";
    std::uint64_t seed = 0;
    int draws = 5000;
    int bridge_grid = 1000;
    int bandwidth = kAutoBandwidth;
    std::string kernel = "bartlett";
    bool remove_step_means = false;
    int threads = 1;
};

void add_data_options(CLI::App* cmd, DataOptions& opt) {
    cmd->add_option("--data", opt.path, "panel CSV file")->required();
    cmd->add_option("--layout", opt.layout, "CSV layout: long|wide")
        ->check(CLI::IsMember({"long", "wide"}));
    cmd->add_option("--seed", opt.seed, "RNG seed for the null simulation");
    cmd->add_option("--draws", opt.draws, "null-simulation draw count");
    cmd->add_option("--bridge-grid", opt.bridge_grid,
                    "bridge lattice resolution");
    cmd->add_option("--bandwidth", opt.bandwidth,
                    "LRC bandwidth (-1 = floor(T^{1/3}))");
    cmd->add_option("--kernel", opt.kernel, "LRC taper: bartlett|flattop")
        ->check(CLI::IsMember({"bartlett", "flattop"}));
    cmd->add_flag("--remove-step-means", opt.remove_step_means,
                  "remove per-subject fitted step means before the LRC fit");
    cmd->add_option("--threads", opt.threads, "worker threads");
}

FunctionalPanel load_data(const DataOptions& opt) {
    PanelSource src;
    src.path = opt.path;
    src.layout = opt.layout == "wide" ? PanelLayout::Wide : PanelLayout::Long;
    return load_panel(src);
}

NullSpec fit_null(const FunctionalPanel& panel, const DataOptions& opt) {
    NullEstimateOptions nopts;
    nopts.bandwidth = opt.bandwidth;
    nopts.kernel_name =
        opt.kernel == "flattop" ? TaperKernel::FlatTop : TaperKernel::Bartlett;
    nopts.remove_step_means = opt.remove_step_means;
    nopts.bridge_grid = opt.bridge_grid;
    nopts.n_draws = opt.draws;
    nopts.seed = opt.seed;
    return estimate_null_spec(panel, nopts);
}

// Threshold shared by breaks/cluster: explicit c_xi or data-driven
// sqrt(lambda1) from the fitted spec.
double resolve_xi(const FunctionalPanel& panel, const NullSpec& spec,
                  const std::string& variant, std::optional<double> c_xi) {
    PeConfig cfg;
    cfg.variant = variant == "xi1" ? XiVariant::Xi1 : XiVariant::Xi2;
    cfg.c_xi = c_xi.has_value() ? *c_xi : std::sqrt(spec.eigenvalues(0));
    return threshold(cfg, panel.n_subjects(), panel.n_times());
}

int cmd_simulate(const std::string& config_path, std::optional<int> reps,
                 std::optional<std::string> out_dir,
                 std::optional<std::uint64_t> seed, std::optional<int> threads) {
    RunConfig cfg = run_config_from_toml(parse_toml_file(config_path));
    if (reps.has_value()) cfg.reps = *reps;
    if (out_dir.has_value()) cfg.out_dir = *out_dir;
    if (seed.has_value()) cfg.dgp.seed = *seed;
    if (threads.has_value()) cfg.flags.threads = *threads;

    const std::vector<RepRecord> records =
        run_experiment(cfg.dgp, cfg.reps, cfg.flags);

    std::filesystem::create_directories(cfg.out_dir);
    const std::string csv_path =
        (std::filesystem::path(cfg.out_dir) / "records.csv").string();
    const std::string json_path =
        (std::filesystem::path(cfg.out_dir) / "summary.json").string();
    atomic_write(csv_path, records_csv(records, cfg.flags));
    json summary = summarize_records(records, cfg);
    summary["records_csv"] = csv_path;
    atomic_write(json_path, summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_test(const DataOptions& opt, const std::string& variant,
             std::vector<double> alphas, std::optional<double> c_xi) {
    const FunctionalPanel panel = load_data(opt);
    const NullSpec spec = fit_null(panel, opt);
    const std::vector<double> draws = simulate_null(spec, opt.threads);

    PeConfig cfg;
    cfg.variant = variant == "xi1" ? XiVariant::Xi1 : XiVariant::Xi2;
    if (c_xi.has_value()) cfg.c_xi = *c_xi;
    const TestResult result = pe_cusum_test(panel, cfg, &spec, &draws);

    if (alphas.empty()) alphas = {0.01, 0.05, 0.10};
    std::vector<double> crits;
    for (double alpha : alphas) crits.push_back(critical_value(draws, alpha));

    json report = test_result_json(result, alphas, crits);
    report["variant"] = variant;
    report["null_spec"] = to_json(spec);
    std::cout << report.dump(2) << "\n";
    return 0;
}

int cmd_breaks(const DataOptions& opt, const std::string& variant,
               std::optional<double> c_xi) {
    const FunctionalPanel panel = load_data(opt);
    const NullSpec spec = fit_null(panel, opt);
    const double xi = resolve_xi(panel, spec, variant, c_xi);
    const BreakReport report = make_break_report(panel, xi);
    json out = to_json(report);
    out["variant"] = variant;
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_cluster(const DataOptions& opt, const std::string& variant,
                std::optional<double> c_xi, int k_bar,
                std::optional<double> rho) {
    const FunctionalPanel panel = load_data(opt);
    const NullSpec spec = fit_null(panel, opt);
    const double xi = resolve_xi(panel, spec, variant, c_xi);
    const BreakReport report = make_break_report(panel, xi);
    if (report.with_breaks.empty())
        throw std::runtime_error("no subject crosses the screening threshold; "
                                 "nothing to cluster");

    const double rho_used =
        rho.has_value() ? *rho : default_rho(panel.n_subjects(), panel.n_times());
    const int k_cap =
        std::min(k_bar, static_cast<int>(report.with_breaks.size()));
    ClusterModel model = select_k(panel, report, k_cap, rho_used);
    model.pooled_b = pooled_breakpoints(panel, model.members);

    json out = to_json(model);
    out["rho"] = rho_used;
    out["k_bar"] = k_cap;
    out["xi"] = xi;
    out["break_report"] = to_json(report);
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_cidr(const std::string& prices_path, const std::string& out_path,
             const std::string& layout) {
    DataOptions opt;
    opt.path = prices_path;
    opt.layout = layout;
    const FunctionalPanel prices = load_data(opt);
    FunctionalPanel curves(prices.n_subjects(), prices.n_times(), prices.grid());
    for (int i = 0; i < prices.n_subjects(); ++i)
        curves.subject(i) = cidr_transform(prices.subject(i));
    save_panel(curves, out_path,
               layout == "wide" ? PanelLayout::Wide : PanelLayout::Long);
    json out;
    out["written"] = out_path;
    out["subjects"] = curves.n_subjects();
    out["times"] = curves.n_times();
    out["grid_size"] = curves.grid().size();
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_null(const DataOptions& opt) {
    const FunctionalPanel panel = load_data(opt);
    const NullSpec spec = fit_null(panel, opt);
    const std::vector<double> draws = simulate_null(spec, opt.threads);
    json out = to_json(spec);
    json quantiles = json::array();
    for (double alpha : {0.01, 0.05, 0.10})
        quantiles.push_back({{"alpha", alpha},
                             {"critical_value", critical_value(draws, alpha)}});
    out["quantiles"] = quantiles;
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structural-break detection for high-dimensional functional "
                 "panels: power-enhanced CUSUM testing, subject classification, "
                 "and latent-group clustering of break points"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "run a Monte-Carlo experiment");
    std::string config_path;
    std::optional<int> sim_reps;
    std::optional<std::string> sim_out;
    std::optional<std::uint64_t> sim_seed;
    std::optional<int> sim_threads;
    sim->add_option("--config", config_path, "TOML run configuration")
        ->required();
    sim->add_option("--reps", sim_reps, "replication count override");
    sim->add_option("--out", sim_out, "output directory override");
    sim->add_option("--seed", sim_seed, "base seed override");
    sim->add_option("--threads", sim_threads, "worker threads override");

    // test
    auto* test = app.add_subcommand("test", "power-enhanced CUSUM test report");
    DataOptions test_opt;
    std::string test_variant = "xi2";
    std::vector<double> test_alphas;
    std::optional<double> test_cxi;
    add_data_options(test, test_opt);
    test->add_option("--variant", test_variant, "screening variant: xi1|xi2")
        ->check(CLI::IsMember({"xi1", "xi2"}));
    test->add_option("--alpha", test_alphas,
                     "significance levels (default 0.01 0.05 0.10)");
    test->add_option("--cxi", test_cxi,
                     "explicit c_xi (default data-driven sqrt(lambda1))");

    // breaks
    auto* breaks = app.add_subcommand("breaks",
                                      "classify subjects and estimate breaks");
    DataOptions breaks_opt;
    std::string breaks_variant = "xi2";
    std::optional<double> breaks_cxi;
    add_data_options(breaks, breaks_opt);
    breaks->add_option("--variant", breaks_variant, "screening variant: xi1|xi2")
        ->check(CLI::IsMember({"xi1", "xi2"}));
    breaks->add_option("--cxi", breaks_cxi, "explicit c_xi");

    // cluster
    auto* cluster = app.add_subcommand("cluster",
                                       "group flagged subjects by break time");
    DataOptions cluster_opt;
    std::string cluster_variant = "xi2";
    std::optional<double> cluster_cxi;
    int cluster_kbar = 10;
    std::optional<double> cluster_rho;
    add_data_options(cluster, cluster_opt);
    cluster->add_option("--variant", cluster_variant,
                        "screening variant: xi1|xi2")
        ->check(CLI::IsMember({"xi1", "xi2"}));
    cluster->add_option("--cxi", cluster_cxi, "explicit c_xi");
    cluster->add_option("--kbar", cluster_kbar, "largest group count tried");
    cluster->add_option("--rho", cluster_rho,
                        "IC penalty (default ln(max(N,T))/sqrt(max(N,T)))");

    // cidr
    auto* cidr = app.add_subcommand("cidr",
                                    "cumulative intraday log-return curves");
    std::string cidr_prices, cidr_out;
    std::string cidr_layout = "wide";
    cidr->add_option("--prices", cidr_prices, "price panel CSV")->required();
    cidr->add_option("--out", cidr_out, "output CSV path")->required();
    cidr->add_option("--layout", cidr_layout, "CSV layout: long|wide")
        ->check(CLI::IsMember({"long", "wide"}));

    // null
    auto* null_cmd = app.add_subcommand("null",
                                        "fitted null spec and quantile table");
    DataOptions null_opt;
    add_data_options(null_cmd, null_opt);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed())
            return cmd_simulate(config_path, sim_reps, sim_out, sim_seed,
                                sim_threads);
        if (test->parsed())
            return cmd_test(test_opt, test_variant, test_alphas, test_cxi);
        if (breaks->parsed())
            return cmd_breaks(breaks_opt, breaks_variant, breaks_cxi);
        if (cluster->parsed())
            return cmd_cluster(cluster_opt, cluster_variant, cluster_cxi,
                               cluster_kbar, cluster_rho);
        if (cidr->parsed()) return cmd_cidr(cidr_prices, cidr_out, cidr_layout);
        if (null_cmd->parsed()) return cmd_null(null_opt);
    } catch (const std::exception& e) {
        nlohmann::json err;
        err["error"] = e.what();
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 2;
}
