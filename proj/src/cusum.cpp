#include "pecusum/cusum.hpp"

#include <cmath>
#include <stdexcept>

namespace pecusum {

namespace {

// Shared CUSUM core: field row r = scale * [S(r+1) - ((r+1)/T) * S(T)] where
// S(t) is the running sum of the first t rows of `series`. Partial sums
// accumulate left to right so results are independent of caller parallelism.
MatRM cusum_from_series(const Eigen::Ref<const MatRM>& series, double scale) {
    const Eigen::Index t_len = series.rows();
    const Eigen::Index g = series.cols();
    Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(g);
    for (Eigen::Index r = 0; r < t_len; ++r) total += series.row(r);

    MatRM field(t_len, g);
    Eigen::RowVectorXd partial = Eigen::RowVectorXd::Zero(g);
    for (Eigen::Index r = 0; r < t_len; ++r) {
        partial += series.row(r);
        const double frac = static_cast<double>(r + 1) / static_cast<double>(t_len);
        field.row(r) = scale * (partial - frac * total);
    }
    // frac = 1 at r = T-1 makes the last row exactly zero in floating point;
    // no correction needed.
    return field;
}

}  // namespace

CusumField pooled_cusum(const FunctionalPanel& panel) {
    const double n = panel.n_subjects();
    const double t = panel.n_times();
    const MatRM mean = cross_sectional_mean(panel);
    return CusumField{cusum_from_series(mean, std::sqrt(n / t)), panel.grid(),
                      CusumScale::Pooled};
}

CusumField subject_cusum(const FunctionalPanel& panel, int i) {
    const double t = panel.n_times();
    return CusumField{cusum_from_series(panel.subject(i), 1.0 / std::sqrt(t)),
                      panel.grid(), CusumScale::Subject};
}

double cusum_statistic(const CusumField& field) {
    double best = 0.0;
    for (Eigen::Index r = 0; r < field.values.rows(); ++r) {
        const double v = field.grid.weights.dot(
            field.values.row(r).transpose().cwiseAbs2());
        if (v > best) best = v;
    }
    return best;
}

Vec cusum_objective(const CusumField& field) {
    Vec obj(field.values.rows());
    for (Eigen::Index r = 0; r < field.values.rows(); ++r)
        obj(r) = field.grid.weights.dot(field.values.row(r).transpose().cwiseAbs2());
    return obj;
}

Vec subject_objective(const FunctionalPanel& panel, int i) {
    const auto series = panel.subject(i);
    const Eigen::Index t_len = series.rows();
    const Eigen::Index g = series.cols();
    const Vec& w = panel.grid().weights;
    const double scale_sq = 1.0 / static_cast<double>(t_len);

    Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(g);
    for (Eigen::Index r = 0; r < t_len; ++r) total += series.row(r);

    Vec obj(t_len);
    Eigen::RowVectorXd partial = Eigen::RowVectorXd::Zero(g);
    for (Eigen::Index r = 0; r < t_len; ++r) {
        partial += series.row(r);
        const double frac = static_cast<double>(r + 1) / static_cast<double>(t_len);
        double acc = 0.0;
        for (Eigen::Index j = 0; j < g; ++j) {
            const double z = partial(j) - frac * total(j);
            acc += w(j) * z * z;
        }
        obj(r) = scale_sq * acc;
    }
    return obj;
}

Vec subject_sup_stats(const FunctionalPanel& panel) {
    Vec sups(panel.n_subjects());
    for (int i = 0; i < panel.n_subjects(); ++i)
        sups(i) = subject_objective(panel, i).maxCoeff();
    return sups;
}

double threshold(const PeConfig& cfg, int n, int t) {
    if (!cfg.c_xi.has_value())
        throw std::invalid_argument(
            "threshold: c_xi unset (data-driven mode needs a fitted null spec)");
    if (*cfg.c_xi <= 0.0) throw std::invalid_argument("threshold: c_xi must be positive");
    const double arg = cfg.variant == XiVariant::Xi1
                           ? static_cast<double>(n) * static_cast<double>(t)
                           : static_cast<double>(std::max(n, t));
    if (arg < 3.0)
        throw std::invalid_argument("threshold: log-log argument below 3");
    return *cfg.c_xi * std::log(arg) * std::log(std::log(arg));
}

double pe_component(const Vec& sups, double xi, int n, int t) {
    if (xi <= 0.0) throw std::invalid_argument("pe_component: xi must be positive");
    int count = 0;
    for (Eigen::Index i = 0; i < sups.size(); ++i)
        if (sups(i) > xi) ++count;
    return count * std::sqrt(static_cast<double>(std::max(n, t)));
}

TestResult pe_cusum_test(const FunctionalPanel& panel, const PeConfig& cfg,
                         const NullSpec* null, const std::vector<double>* sorted_draws) {
    PeConfig resolved = cfg;
    if (!resolved.c_xi.has_value()) {
        if (null == nullptr || null->eigenvalues.size() == 0)
            throw std::invalid_argument(
                "pe_cusum_test: data-driven c_xi needs a null spec with eigenvalues");
        resolved.c_xi = std::sqrt(null->eigenvalues(0));
    }

    TestResult result;
    result.subject_sups = subject_sup_stats(panel);
    result.z_nt = cusum_statistic(pooled_cusum(panel));
    result.threshold = threshold(resolved, panel.n_subjects(), panel.n_times());
    result.z_pe = pe_component(result.subject_sups, result.threshold,
                               panel.n_subjects(), panel.n_times());
    result.z_hat = result.z_nt + result.z_pe;

    if (null != nullptr) {
        if (sorted_draws != nullptr) {
            result.p_value = p_value(*sorted_draws, result.z_hat);
        } else {
            const std::vector<double> draws = simulate_null(*null);
            result.p_value = p_value(draws, result.z_hat);
        }
    }
    return result;
}

}  // namespace pecusum
