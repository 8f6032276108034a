#include "pecusum/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pecusum/parallel.hpp"
#include "pecusum/rng.hpp"

namespace pecusum {

namespace {

constexpr std::uint64_t kPermStream = 0x7065726dULL;
constexpr std::uint64_t kAmatStream = 0x616d6174ULL;
constexpr std::uint64_t kBetaStream = 0x62657461ULL;
constexpr std::uint64_t kEtaStream = 0x65746130ULL;
constexpr std::uint64_t kBreakStream = 0x62726b73ULL;
constexpr std::uint64_t kRepStream = 0x72657073ULL;
constexpr std::uint64_t kNullSeedStream = 0x6e736564ULL;

constexpr int kFourierSystemSize = 21;
constexpr double kPi = 3.14159265358979323846;

void validate_config(const DgpConfig& cfg) {
    if (cfg.n < 1) throw std::invalid_argument("dgp: n must be >= 1");
    if (cfg.t < 2) throw std::invalid_argument("dgp: t must be >= 2");
    if (cfg.grid_size < 2) throw std::invalid_argument("dgp: grid_size must be >= 2");
    if (cfg.j_basis < 1 || cfg.j_basis > kFourierSystemSize)
        throw std::invalid_argument("dgp: j_basis outside {1..21}");
    if (cfg.m < 1 || cfg.m > cfg.j_basis)
        throw std::invalid_argument("dgp: m outside {1..j_basis}");
    if (cfg.sdr < 0.0 || cfg.sdr > 1.0)
        throw std::invalid_argument("dgp: sdr outside [0,1]");
    if (cfg.snr < 0.0) throw std::invalid_argument("dgp: snr must be >= 0");
    if (!(cfg.window_lo > 0.0 && cfg.window_lo <= cfg.window_hi &&
          cfg.window_hi < 1.0))
        throw std::invalid_argument("dgp: break window must satisfy 0 < lo <= hi < 1");
    if (cfg.burn_in < 0) throw std::invalid_argument("dgp: burn_in must be >= 0");
    if (cfg.var_coef_lo > cfg.var_coef_hi)
        throw std::invalid_argument("dgp: var_coef_lo > var_coef_hi");
    for (double f : cfg.k0_break_fracs)
        if (!(f > 0.0 && f < 1.0))
            throw std::invalid_argument("dgp: group break fractions must lie in (0,1)");
}

// Shared by gen_errors and gen_panel so the error realization and the basis
// permutation stay identical for a given seed whether or not breaks follow.
FunctionalPanel errors_impl(const DgpConfig& cfg, Eigen::MatrixXd& a_matrix,
                            std::vector<int>& basis_order) {
    const Grid grid = make_uniform_grid(cfg.grid_size);
    const MatRM system = fourier_basis(kFourierSystemSize, grid);

    std::mt19937_64 perm_eng = rng::make_engine(cfg.seed, kPermStream, 0);
    const std::vector<int> perm = rng::permutation(kFourierSystemSize, perm_eng);
    basis_order.assign(perm.begin(), perm.begin() + cfg.j_basis);

    MatRM basis_used(cfg.j_basis, grid.size());
    for (int j = 0; j < cfg.j_basis; ++j)
        basis_used.row(j) = system.row(basis_order[j]);

    std::mt19937_64 a_eng = rng::make_engine(cfg.seed, kAmatStream, 0);
    a_matrix = draw_var_matrix(cfg.n, cfg.var_band, cfg.var_coef_lo,
                               cfg.var_coef_hi, a_eng);
    const bool zero_a = cfg.var_band < 0;
    const int band = std::max(0, cfg.var_band);

    // Coefficient tensor: row (i*T + t), column j holds beta_it,j + eta_it,j.
    MatRM coef = MatRM::Zero(static_cast<Eigen::Index>(cfg.n) * cfg.t, cfg.j_basis);

    std::mt19937_64 beta_eng = rng::make_engine(cfg.seed, kBetaStream, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> state(cfg.n), next(cfg.n);
    for (int j = 0; j < cfg.j_basis; ++j) {
        std::fill(state.begin(), state.end(), 0.0);
        for (int step = 0; step < cfg.burn_in + cfg.t; ++step) {
            if (zero_a) {
                for (int i = 0; i < cfg.n; ++i) next[i] = normal(beta_eng);
            } else {
                for (int i = 0; i < cfg.n; ++i) {
                    double acc = normal(beta_eng);
                    const int lo = std::max(0, i - band);
                    const int hi = std::min(cfg.n - 1, i + band);
                    for (int l = lo; l <= hi; ++l) acc += a_matrix(i, l) * state[l];
                    next[i] = acc;
                }
            }
            std::swap(state, next);
            if (step >= cfg.burn_in) {
                const int t = step - cfg.burn_in;
                for (int i = 0; i < cfg.n; ++i)
                    coef(static_cast<Eigen::Index>(i) * cfg.t + t, j) = state[i];
            }
        }
    }

    std::mt19937_64 eta_eng = rng::make_engine(cfg.seed, kEtaStream, 0);
    std::vector<double> eta_sd(cfg.j_basis);
    for (int j = 0; j < cfg.j_basis; ++j)
        eta_sd[j] = 1.0 / std::sqrt(static_cast<double>(j + 1));
    for (Eigen::Index row = 0; row < coef.rows(); ++row)
        for (int j = 0; j < cfg.j_basis; ++j)
            coef(row, j) += eta_sd[j] * normal(eta_eng);

    FunctionalPanel panel(cfg.n, cfg.t, grid);
    panel.data().noalias() = coef * basis_used;
    return panel;
}

struct BreakPlan {
    std::vector<int> subjects;  // ascending
    std::vector<int> taus;      // aligned
    std::vector<std::vector<int>> clusters;
    std::vector<int> cluster_b;
};

BreakPlan plan_breaks(const DgpConfig& cfg) {
    BreakPlan plan;
    const int nb = static_cast<int>(std::floor(cfg.sdr * cfg.n));
    if (nb == 0) return plan;

    if (!cfg.k0_break_fracs.empty()) {
        // Grouped design: the last nb subjects break, contiguous groups as
        // equal as possible (remainder pushed to the later groups).
        const int k0 = static_cast<int>(cfg.k0_break_fracs.size());
        if (nb < k0)
            throw std::invalid_argument("dgp: fewer break subjects than groups");
        const int base = nb / k0;
        const int rem = nb % k0;
        int subject = cfg.n - nb;
        for (int g = 0; g < k0; ++g) {
            const int size = base + (g >= k0 - rem ? 1 : 0);
            const int tau = std::clamp(
                static_cast<int>(std::lround(cfg.k0_break_fracs[g] * cfg.t)), 1,
                cfg.t - 1);
            std::vector<int> group;
            group.reserve(size);
            for (int s = 0; s < size; ++s) {
                plan.subjects.push_back(subject);
                plan.taus.push_back(tau);
                group.push_back(subject);
                ++subject;
            }
            plan.clusters.push_back(std::move(group));
            plan.cluster_b.push_back(tau);
        }
        return plan;
    }

    std::mt19937_64 eng = rng::make_engine(cfg.seed, kBreakStream, 0);
    std::vector<int> perm = rng::permutation(cfg.n, eng);
    perm.resize(nb);
    std::sort(perm.begin(), perm.end());
    plan.subjects = std::move(perm);

    const int tau_lo = static_cast<int>(std::ceil(cfg.window_lo * cfg.t));
    const int tau_hi = static_cast<int>(std::floor(cfg.window_hi * cfg.t));
    if (tau_lo < 1 || tau_hi > cfg.t - 1 || tau_lo > tau_hi)
        throw std::invalid_argument("dgp: break window leaves no valid integer time");
    std::uniform_int_distribution<int> tau_dist(tau_lo, tau_hi);
    plan.taus.reserve(nb);
    for (int s = 0; s < nb; ++s) plan.taus.push_back(tau_dist(eng));
    return plan;
}

}  // namespace

MatRM fourier_basis(int j_basis, const Grid& grid) {
    if (j_basis < 1 || j_basis > kFourierSystemSize)
        throw std::invalid_argument("fourier_basis: j_basis outside {1..21}");
    const double two_pi = 2.0 * kPi;
    const double root2 = std::sqrt(2.0);
    MatRM basis(j_basis, grid.size());
    for (int j = 0; j < j_basis; ++j) {
        for (int g = 0; g < grid.size(); ++g) {
            const double u = grid.points(g);
            if (j == 0) {
                basis(j, g) = 1.0;
            } else {
                const int k = (j + 1) / 2;
                basis(j, g) = (j % 2 == 1) ? root2 * std::cos(two_pi * k * u)
                                           : root2 * std::sin(two_pi * k * u);
            }
        }
    }
    return basis;
}

Eigen::MatrixXd draw_var_matrix(int n, int band, double lo, double hi,
                                std::mt19937_64& eng) {
    if (n < 1) throw std::invalid_argument("draw_var_matrix: n must be >= 1");
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    if (band < 0) return a;

    std::uniform_real_distribution<double> unif(lo, hi);
    for (int attempt = 0; attempt < 100; ++attempt) {
        for (int i = 0; i < n; ++i) {
            const int l_lo = std::max(0, i - band);
            const int l_hi = std::min(n - 1, i + band);
            for (int l = l_lo; l <= l_hi; ++l) a(i, l) = unif(eng);
        }
        const Eigen::VectorXcd eigs = Eigen::EigenSolver<Eigen::MatrixXd>(a, false)
                                          .eigenvalues();
        double radius = 0.0;
        for (Eigen::Index i = 0; i < eigs.size(); ++i)
            radius = std::max(radius, std::abs(eigs(i)));
        if (radius < 1.0) return a;
    }
    throw std::runtime_error("draw_var_matrix: no stable draw in 100 attempts");
}

FunctionalPanel gen_errors(const DgpConfig& cfg, Eigen::MatrixXd* a_out) {
    validate_config(cfg);
    Eigen::MatrixXd a;
    std::vector<int> order;
    FunctionalPanel panel = errors_impl(cfg, a, order);
    if (a_out != nullptr) *a_out = std::move(a);
    return panel;
}

Vec break_function(int m, double c_star, const MatRM& basis) {
    if (m < 1 || m > basis.rows())
        throw std::invalid_argument("break_function: m outside {1..#basis}");
    if (c_star < 0.0) throw std::invalid_argument("break_function: c_star must be >= 0");
    Vec delta = Vec::Zero(basis.cols());
    for (int j = 0; j < m; ++j) delta += basis.row(j).transpose();
    delta *= std::sqrt(c_star) / std::sqrt(static_cast<double>(m));
    return delta;
}

double harmonic_number(int j) {
    if (j < 0) throw std::invalid_argument("harmonic_number: j must be >= 0");
    double h = 0.0;
    for (int i = 1; i <= j; ++i) h += 1.0 / i;
    return h;
}

double calibrate_c_star(double snr, int tau, int t,
                        const Eigen::MatrixXd& a_matrix, int i, int j_basis) {
    if (tau < 1 || tau >= t)
        throw std::invalid_argument("calibrate_c_star: tau outside {1..T-1}");
    if (i < 0 || i >= a_matrix.rows())
        throw std::invalid_argument("calibrate_c_star: subject out of range");
    const Eigen::MatrixXd eye =
        Eigen::MatrixXd::Identity(a_matrix.rows(), a_matrix.cols());
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(eye - a_matrix);
    if (std::abs(lu.determinant()) < 1e-12)
        throw std::domain_error("calibrate_c_star: I - A is singular");
    // [(I-A)^{-1}(I-A^T)^{-1}]_{ii} = || row i of (I-A)^{-1} ||^2; extract the
    // row by solving against the i-th unit vector on the transposed system.
    const Eigen::VectorXd row =
        lu.transpose().solve(Eigen::VectorXd::Unit(a_matrix.rows(), i));
    const double beta_lr = row.squaredNorm();
    const double trace = j_basis * beta_lr + harmonic_number(j_basis);
    const double x = static_cast<double>(tau) / static_cast<double>(t);
    return snr * trace / (x * (1.0 - x));
}

FunctionalPanel gen_panel(const DgpConfig& cfg, GroundTruth& truth,
                          FunctionalPanel* errors_out) {
    validate_config(cfg);
    truth = GroundTruth{};
    FunctionalPanel panel = errors_impl(cfg, truth.a_matrix, truth.basis_order);
    if (errors_out != nullptr) *errors_out = panel;

    const BreakPlan plan = plan_breaks(cfg);
    truth.break_set = plan.subjects;
    truth.tau = plan.taus;
    truth.clusters = plan.clusters;
    truth.cluster_b = plan.cluster_b;
    if (plan.subjects.empty()) return panel;

    const Grid& grid = panel.grid();
    const MatRM system = fourier_basis(kFourierSystemSize, grid);
    MatRM basis_used(cfg.j_basis, grid.size());
    for (int j = 0; j < cfg.j_basis; ++j)
        basis_used.row(j) = system.row(truth.basis_order[j]);

    // One LU solve serves every subject's calibration diagonal.
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(cfg.n, cfg.n);
    const Eigen::MatrixXd inv_ia =
        (eye - truth.a_matrix).partialPivLu().solve(eye);
    const double h_j = harmonic_number(cfg.j_basis);

    truth.delta.reserve(plan.subjects.size());
    for (std::size_t s = 0; s < plan.subjects.size(); ++s) {
        const int i = plan.subjects[s];
        const int tau = plan.taus[s];
        const double beta_lr = inv_ia.row(i).squaredNorm();
        const double trace = cfg.j_basis * beta_lr + h_j;
        const double x = static_cast<double>(tau) / static_cast<double>(cfg.t);
        const double c_star = cfg.snr * trace / (x * (1.0 - x));
        const Vec delta = break_function(cfg.m, c_star, basis_used);
        for (int t = tau; t < cfg.t; ++t)
            panel.curve(i, t) += delta.transpose();
        truth.delta.push_back(delta);
    }
    return panel;
}

// ---------------------------------------------------------------------------
// Replication harness
// ---------------------------------------------------------------------------

namespace {

struct SharedNull {
    bool active = false;
    NullSpec spec;
    std::vector<double> draws;
};

void run_one(const DgpConfig& cfg, const RunFlags& flags, int rep,
             const SharedNull& shared, RepRecord& rec) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rec.rep = rep;
    rec.k_hat = 0;
    rec.purity = nan;
    rec.nmi = nan;
    rec.msd_pre = nan;
    rec.msd_post = nan;
    rec.realized_snr = nan;

    DgpConfig rep_cfg = cfg;
    rep_cfg.seed = rng::derive_seed(cfg.seed, kRepStream,
                                    static_cast<std::uint64_t>(rep));
    rec.seed = rep_cfg.seed;

    GroundTruth truth;
    FunctionalPanel errors(1, 2, make_uniform_grid(2));
    FunctionalPanel panel = gen_panel(rep_cfg, truth,
                                      flags.realized_snr ? &errors : nullptr);

    NullSpec spec;
    if (shared.active) {
        spec = shared.spec;
    } else {
        NullEstimateOptions nopts;
        nopts.bandwidth = flags.lrc_bandwidth;
        nopts.kernel_name = flags.kernel_name;
        nopts.remove_step_means = flags.remove_step_means;
        nopts.bridge_grid = flags.bridge_grid;
        nopts.n_draws = flags.n_draws;
        nopts.seed = rng::derive_seed(cfg.seed, kNullSeedStream,
                                      static_cast<std::uint64_t>(rep));
        spec = estimate_null_spec(panel, nopts);
    }
    rec.lambda1 = spec.eigenvalues.size() > 0 ? spec.eigenvalues(0) : 0.0;

    const Vec sups = subject_sup_stats(panel);
    rec.z_nt = cusum_statistic(pooled_cusum(panel));

    const double c_xi = std::sqrt(rec.lambda1);
    if (c_xi > 0.0) {
        rec.xi1 = threshold(PeConfig{XiVariant::Xi1, c_xi}, cfg.n, cfg.t);
        rec.xi2 = threshold(PeConfig{XiVariant::Xi2, c_xi}, cfg.n, cfg.t);
        rec.z_pe_xi1 = pe_component(sups, rec.xi1, cfg.n, cfg.t);
        rec.z_pe_xi2 = pe_component(sups, rec.xi2, cfg.n, cfg.t);
    } else {
        rec.xi1 = rec.xi2 = nan;
        rec.z_pe_xi1 = rec.z_pe_xi2 = nan;
    }

    if (flags.critical_values) {
        const std::vector<double>* draws = &shared.draws;
        std::vector<double> own;
        if (!shared.active) {
            own = simulate_null(spec, 1);
            draws = &own;
        }
        rec.crit.clear();
        for (double alpha : flags.alphas)
            rec.crit.push_back(critical_value(*draws, alpha));
    }

    if (flags.classify) {
        for (int variant = 0; variant < 2; ++variant) {
            const double xi = variant == 0 ? rec.xi1 : rec.xi2;
            ClassificationMetrics& out = variant == 0 ? rec.cls_xi1 : rec.cls_xi2;
            if (!std::isfinite(xi) || xi <= 0.0) {
                out = ClassificationMetrics{nan, nan, nan, 0, 0, 0};
                continue;
            }
            const auto [flagged, clear] = classify_subjects(sups, xi);
            out = metrics_tp_f1(flagged, truth.break_set, cfg.n);
        }
    }

    if (flags.cluster && std::isfinite(rec.xi2) && rec.xi2 > 0.0) {
        const BreakReport report = make_break_report(panel, rec.xi2);
        if (!report.with_breaks.empty()) {
            const double rho = flags.rho < 0.0 ? default_rho(cfg.n, cfg.t)
                                               : flags.rho;
            const int k_bar =
                std::min(flags.k_bar, static_cast<int>(report.with_breaks.size()));
            const ClusterModel model = select_k(panel, report, k_bar, rho);
            rec.k_hat = model.k;
            rec.ic.clear();
            for (const auto& [k, ic] : model.ic_values) rec.ic.push_back(ic);

            // Metrics on the common set: correctly flagged true-break subjects.
            std::vector<int> common;
            std::set_intersection(report.with_breaks.begin(),
                                  report.with_breaks.end(),
                                  truth.break_set.begin(), truth.break_set.end(),
                                  std::back_inserter(common));
            if (!common.empty()) {
                auto restrict = [&common](const std::vector<std::vector<int>>& parts) {
                    std::vector<std::vector<int>> out;
                    for (const auto& part : parts) {
                        std::vector<int> kept;
                        std::set_intersection(part.begin(), part.end(),
                                              common.begin(), common.end(),
                                              std::back_inserter(kept));
                        out.push_back(std::move(kept));
                    }
                    return out;
                };
                if (!truth.clusters.empty()) {
                    const auto [purity, nmi] =
                        metrics_clustering(restrict(model.members),
                                           restrict(truth.clusters),
                                           static_cast<int>(common.size()));
                    rec.purity = purity;
                    rec.nmi = nmi;
                }

                double pre = 0.0;
                for (int i : common) {
                    const auto est_pos =
                        std::lower_bound(report.with_breaks.begin(),
                                         report.with_breaks.end(), i) -
                        report.with_breaks.begin();
                    const auto true_pos =
                        std::lower_bound(truth.break_set.begin(),
                                         truth.break_set.end(), i) -
                        truth.break_set.begin();
                    const double d = report.tau_hat[est_pos] - truth.tau[true_pos];
                    pre += d * d;
                }
                rec.msd_pre = pre / static_cast<double>(common.size());
            }

            if (!truth.cluster_b.empty() &&
                model.k == static_cast<int>(truth.cluster_b.size())) {
                const std::vector<int> b_hat =
                    pooled_breakpoints(panel, model.members);
                if (std::find(b_hat.begin(), b_hat.end(), -1) == b_hat.end())
                    rec.msd_post = metric_msd(b_hat, truth.cluster_b);
            }
        }
    }

    if (flags.realized_snr && !truth.break_set.empty()) {
        double acc = 0.0;
        for (std::size_t s = 0; s < truth.break_set.size(); ++s) {
            const int i = truth.break_set[s];
            const double x =
                static_cast<double>(truth.tau[s]) / static_cast<double>(cfg.t);
            const double trace =
                lrc_trace(errors.subject(i), panel.grid(), flags.lrc_bandwidth,
                          flags.kernel_name);
            acc += x * (1.0 - x) * l2_norm_sq(truth.delta[s], panel.grid()) / trace;
        }
        rec.realized_snr = acc / static_cast<double>(truth.break_set.size());
    }
}

}  // namespace

std::vector<RepRecord> run_experiment(const DgpConfig& cfg, int r,
                                      const RunFlags& flags) {
    if (r < 1) throw std::invalid_argument("run_experiment: r must be >= 1");
    for (double alpha : flags.alphas)
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("run_experiment: alpha outside (0,1)");

    std::vector<RepRecord> records(r);
    SharedNull shared;

    auto guarded = [&](int rep) {
        try {
            run_one(cfg, flags, rep, shared, records[rep]);
        } catch (const std::exception& e) {
            records[rep].rep = rep;
            records[rep].error = e.what();
        }
    };

    if (flags.share_null_across_reps) {
        // Fit the spec (and draws) on replication 0's panel, then share.
        DgpConfig rep_cfg = cfg;
        rep_cfg.seed = rng::derive_seed(cfg.seed, kRepStream, 0);
        GroundTruth truth;
        const FunctionalPanel panel = gen_panel(rep_cfg, truth);
        NullEstimateOptions nopts;
        nopts.bandwidth = flags.lrc_bandwidth;
        nopts.kernel_name = flags.kernel_name;
        nopts.remove_step_means = flags.remove_step_means;
        nopts.bridge_grid = flags.bridge_grid;
        nopts.n_draws = flags.n_draws;
        nopts.seed = rng::derive_seed(cfg.seed, kNullSeedStream, 0);
        shared.spec = estimate_null_spec(panel, nopts);
        if (flags.critical_values)
            shared.draws = simulate_null(shared.spec, flags.threads);
        shared.active = true;
    }

    parallel_for(r, flags.threads, [&](int rep) { guarded(rep); });
    return records;
}

}  // namespace pecusum
