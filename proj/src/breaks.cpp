#include "pecusum/breaks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "pecusum/cusum.hpp"

namespace pecusum {

std::pair<std::vector<int>, std::vector<int>> classify_subjects(const Vec& sups,
                                                                double xi) {
    if (xi <= 0.0) throw std::invalid_argument("classify_subjects: xi must be positive");
    std::vector<int> flagged, clear;
    for (Eigen::Index i = 0; i < sups.size(); ++i)
        (sups(i) >= xi ? flagged : clear).push_back(static_cast<int>(i));
    return {std::move(flagged), std::move(clear)};
}

int estimate_breakpoint(const FunctionalPanel& panel, int i) {
    const Vec obj = subject_objective(panel, i);
    // t ranges over {1..T-1}; the objective vanishes identically at t = T.
    int best_t = 1;
    double best = obj(0);
    for (int r = 1; r + 1 < panel.n_times(); ++r)
        if (obj(r) > best) { best = obj(r); best_t = r + 1; }
    return best_t;
}

BreakReport make_break_report(const FunctionalPanel& panel, double xi) {
    BreakReport report;
    report.xi = xi;
    report.sup_stats = subject_sup_stats(panel);
    auto [flagged, clear] = classify_subjects(report.sup_stats, xi);
    report.with_breaks = std::move(flagged);
    report.without_breaks = std::move(clear);
    report.tau_hat.reserve(report.with_breaks.size());
    for (int i : report.with_breaks)
        report.tau_hat.push_back(estimate_breakpoint(panel, i));
    return report;
}

std::vector<std::vector<int>> cluster_given_k(const std::vector<int>& subjects,
                                              const std::vector<int>& tau,
                                              int k, int t_len) {
    const int n = static_cast<int>(subjects.size());
    if (subjects.size() != tau.size())
        throw std::invalid_argument("cluster_given_k: subjects/tau length mismatch");
    if (n < 1) throw std::invalid_argument("cluster_given_k: no subjects");
    if (k < 1 || k > n)
        throw std::invalid_argument("cluster_given_k: k outside {1..#subjects}");

    // Sort by (tau, subject) for a deterministic order under tied break times.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (tau[a] != tau[b]) return tau[a] < tau[b];
        return subjects[a] < subjects[b];
    });

    // k-1 largest consecutive gaps; ties prefer the earlier gap. Boundary =
    // right endpoint of a chosen gap.
    std::vector<int> gap_idx(std::max(0, n - 1));
    std::iota(gap_idx.begin(), gap_idx.end(), 0);
    std::stable_sort(gap_idx.begin(), gap_idx.end(), [&](int a, int b) {
        const int ga = tau[order[a + 1]] - tau[order[a]];
        const int gb = tau[order[b + 1]] - tau[order[b]];
        return ga > gb;
    });
    std::vector<int> boundaries;
    boundaries.reserve(k);
    for (int j = 0; j < k - 1; ++j)
        boundaries.push_back(tau[order[gap_idx[j] + 1]]);
    std::sort(boundaries.begin(), boundaries.end());
    boundaries.push_back(t_len);  // last cluster closed at T

    std::vector<std::vector<int>> clusters(k);
    for (int pos = 0; pos < n; ++pos) {
        const int idx = order[pos];
        const int ti = tau[idx];
        int c = 0;
        while (c + 1 < k && ti >= boundaries[c]) ++c;
        if (ti >= t_len) c = k - 1;  // tau = T closes into the final cluster
        clusters[c].push_back(subjects[idx]);
    }
    for (auto& members : clusters) std::sort(members.begin(), members.end());
    return clusters;
}

GroupParams group_parameters(const FunctionalPanel& panel,
                             const std::vector<int>& members,
                             const std::vector<int>& taus) {
    if (members.empty()) throw std::invalid_argument("group_parameters: empty cluster");
    if (members.size() != taus.size())
        throw std::invalid_argument("group_parameters: members/taus length mismatch");
    const int t_len = panel.n_times();

    GroupParams params;
    double sum = 0.0;
    for (int ti : taus) sum += ti;
    params.tau_mean = sum / static_cast<double>(taus.size());
    params.split = static_cast<int>(std::floor(params.tau_mean));
    if (params.split < 1 || params.split > t_len - 1)
        throw std::domain_error("group_parameters: split leaves an empty side");

    params.mu.reserve(members.size());
    params.delta.reserve(members.size());
    for (int i : members) {
        const auto series = panel.subject(i);
        const Vec pre =
            series.topRows(params.split).colwise().mean().transpose();
        const Vec post =
            series.bottomRows(t_len - params.split).colwise().mean().transpose();
        params.mu.push_back(pre);
        params.delta.push_back(post - pre);
    }
    return params;
}

namespace {

// Residual machinery for V(K): per-subject prefix sums reduce each candidate
// split to O(1). With S_t the running row sum, q_t = sum of weighted squared
// row norms, g_t = ||S_t||^2, c_t = <S_t, S_T> (all quadrature-weighted):
//   SSR(split s) = [q_s - g_s/s] + [(q_T - q_s) - (g_T - 2 c_s + g_s)/(T-s)].
struct SubjectPrefix {
    Vec q, g, c;  // 1-based in t: entry t-1 holds the t-term prefix
};

SubjectPrefix make_prefix(const FunctionalPanel& panel, int i) {
    const auto series = panel.subject(i);
    const Eigen::Index t_len = series.rows();
    const Eigen::Index gg = series.cols();
    const Vec& w = panel.grid().weights;

    Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(gg);
    for (Eigen::Index r = 0; r < t_len; ++r) total += series.row(r);

    SubjectPrefix p{Vec(t_len), Vec(t_len), Vec(t_len)};
    Eigen::RowVectorXd partial = Eigen::RowVectorXd::Zero(gg);
    double q_acc = 0.0;
    for (Eigen::Index r = 0; r < t_len; ++r) {
        partial += series.row(r);
        double qr = 0.0, gr = 0.0, cr = 0.0;
        for (Eigen::Index j = 0; j < gg; ++j) {
            const double x = series(r, j);
            qr += w(j) * x * x;
            gr += w(j) * partial(j) * partial(j);
            cr += w(j) * partial(j) * total(j);
        }
        q_acc += qr;
        p.q(r) = q_acc;
        p.g(r) = gr;
        p.c(r) = cr;
    }
    return p;
}

double prefix_ssr(const SubjectPrefix& p, int split) {
    const Eigen::Index t_len = p.q.size();
    const double qs = p.q(split - 1), gs = p.g(split - 1), cs = p.c(split - 1);
    const double qt = p.q(t_len - 1), gt = p.g(t_len - 1);
    const double pre = qs - gs / static_cast<double>(split);
    const double post = (qt - qs) - (gt - 2.0 * cs + gs) /
                                        static_cast<double>(t_len - split);
    // Exact-fit residuals can round to tiny negatives; clamp.
    return std::max(0.0, pre) + std::max(0.0, post);
}

// V(K) via the prefix arrays; prefixes owned by the caller so select_k can
// reuse them across K.
double v_of_k(const FunctionalPanel& panel, const BreakReport& report, int k,
              const std::vector<SubjectPrefix>& prefixes) {
    const int t_len = panel.n_times();
    const auto clusters = cluster_given_k(report.with_breaks, report.tau_hat,
                                          k, t_len);
    // Positional lookup: subject id -> index within the flagged set.
    double total = 0.0;
    for (const auto& members : clusters) {
        if (members.empty()) continue;
        double tau_sum = 0.0;
        for (int i : members) {
            const auto pos = std::lower_bound(report.with_breaks.begin(),
                                              report.with_breaks.end(), i) -
                             report.with_breaks.begin();
            tau_sum += report.tau_hat[pos];
        }
        const int split =
            static_cast<int>(std::floor(tau_sum / static_cast<double>(members.size())));
        if (split < 1 || split > t_len - 1)
            throw std::domain_error("information_criterion: split leaves an empty side");
        for (int i : members) {
            const auto pos = std::lower_bound(report.with_breaks.begin(),
                                              report.with_breaks.end(), i) -
                             report.with_breaks.begin();
            total += prefix_ssr(prefixes[pos], split) / static_cast<double>(t_len);
        }
    }
    return total / static_cast<double>(report.with_breaks.size());
}

std::vector<SubjectPrefix> flagged_prefixes(const FunctionalPanel& panel,
                                            const BreakReport& report) {
    std::vector<SubjectPrefix> prefixes;
    prefixes.reserve(report.with_breaks.size());
    for (int i : report.with_breaks) prefixes.push_back(make_prefix(panel, i));
    return prefixes;
}

}  // namespace

double information_criterion(const FunctionalPanel& panel,
                             const BreakReport& report, int k, double rho,
                             double* v_out) {
    if (report.with_breaks.empty())
        throw std::invalid_argument("information_criterion: empty flagged set");
    if (rho < 0.0) throw std::invalid_argument("information_criterion: rho must be >= 0");
    const auto prefixes = flagged_prefixes(panel, report);
    const double v = v_of_k(panel, report, k, prefixes);
    if (v_out != nullptr) *v_out = v;
    if (v <= 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(v) + k * rho;
}

ClusterModel select_k(const FunctionalPanel& panel, const BreakReport& report,
                      int k_bar, double rho) {
    const int n_flagged = static_cast<int>(report.with_breaks.size());
    if (n_flagged == 0)
        throw std::invalid_argument("select_k: nothing to cluster (empty flagged set)");
    if (k_bar < 1 || k_bar > n_flagged)
        throw std::invalid_argument("select_k: k_bar outside {1..#flagged}");
    if (rho < 0.0) throw std::invalid_argument("select_k: rho must be >= 0");

    const auto prefixes = flagged_prefixes(panel, report);
    ClusterModel model;
    int best_k = 1;
    double best_ic = std::numeric_limits<double>::infinity();
    int degenerate_k = 0;  // smallest K with an exact fit, if any
    for (int k = 1; k <= k_bar; ++k) {
        const double v = v_of_k(panel, report, k, prefixes);
        const double ic = v <= 0.0 ? -std::numeric_limits<double>::infinity()
                                   : std::log(v) + k * rho;
        model.ic_values[k] = ic;
        if (v <= 0.0 && degenerate_k == 0) degenerate_k = k;
        if (ic < best_ic) { best_ic = ic; best_k = k; }
    }
    if (degenerate_k > 0) best_k = degenerate_k;

    model.k = best_k;
    model.members = cluster_given_k(report.with_breaks, report.tau_hat, best_k,
                                    panel.n_times());
    model.group_tau.reserve(best_k);
    for (const auto& members : model.members) {
        if (members.empty()) {
            model.group_tau.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        double sum = 0.0;
        for (int i : members) {
            const auto pos = std::lower_bound(report.with_breaks.begin(),
                                              report.with_breaks.end(), i) -
                             report.with_breaks.begin();
            sum += report.tau_hat[pos];
        }
        model.group_tau.push_back(sum / static_cast<double>(members.size()));
    }
    return model;
}

int pooled_breakpoint(const FunctionalPanel& panel,
                      const std::vector<int>& members) {
    if (members.empty()) throw std::invalid_argument("pooled_breakpoint: empty cluster");
    Vec pooled = Vec::Zero(panel.n_times());
    for (int i : members) pooled += subject_objective(panel, i);
    int best_t = 1;
    double best = pooled(0);
    for (int r = 1; r + 1 < panel.n_times(); ++r)
        if (pooled(r) > best) { best = pooled(r); best_t = r + 1; }
    return best_t;
}

std::vector<int> pooled_breakpoints(const FunctionalPanel& panel,
                                    const std::vector<std::vector<int>>& members) {
    std::vector<int> out;
    out.reserve(members.size());
    for (const auto& cluster : members)
        out.push_back(cluster.empty() ? -1 : pooled_breakpoint(panel, cluster));
    return out;
}

double default_rho(int n, int t) {
    const double nt = static_cast<double>(std::max(n, t));
    if (nt < 2.0) throw std::invalid_argument("default_rho: max(N,T) must be >= 2");
    return std::log(nt) / std::sqrt(nt);
}

}  // namespace pecusum
