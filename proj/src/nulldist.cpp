#include "pecusum/nulldist.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pecusum/cusum.hpp"
#include "pecusum/parallel.hpp"
#include "pecusum/rng.hpp"

namespace pecusum {

namespace {

constexpr std::uint64_t kNullDrawStream = 0x6e756c6cULL;  // per-draw seeding

double taper_weight(TaperKernel kernel_name, double x) {
    const double a = std::abs(x);
    switch (kernel_name) {
        case TaperKernel::Bartlett:
            return a >= 1.0 ? 0.0 : 1.0 - a;
        case TaperKernel::FlatTop:
            if (a <= 0.5) return 1.0;
            return a >= 1.0 ? 0.0 : 2.0 * (1.0 - a);
    }
    return 0.0;
}

int resolve_bandwidth(int bandwidth, Eigen::Index t_len) {
    if (bandwidth == kAutoBandwidth)
        bandwidth = static_cast<int>(std::floor(std::cbrt(static_cast<double>(t_len))));
    if (bandwidth < 0) throw std::invalid_argument("lrc: bandwidth must be nonnegative");
    if (bandwidth >= t_len) throw std::invalid_argument("lrc: bandwidth must be < T");
    return bandwidth;
}

}  // namespace

LongRunCovariance estimate_lrc(const MatRM& series, const Grid& grid,
                               int bandwidth, TaperKernel kernel_name) {
    const Eigen::Index t_len = series.rows();
    if (t_len < 4) throw std::invalid_argument("lrc: need at least 4 time points");
    if (series.cols() != grid.points.size())
        throw std::invalid_argument("lrc: series/grid width mismatch");
    const int bw = resolve_bandwidth(bandwidth, t_len);

    MatRM centered = series;
    const Eigen::RowVectorXd time_mean = series.colwise().mean();
    centered.rowwise() -= time_mean;

    // gamma_h = (1/T) sum_{t=h..T-1} x_t x_{t-h}^T; kernel adds gamma_h + gamma_h^T
    // for h >= 1 so the result is symmetric by construction.
    const Eigen::Index g = grid.points.size();
    MatRM kernel = MatRM::Zero(g, g);
    kernel = (centered.transpose() * centered) / static_cast<double>(t_len);
    for (int h = 1; h <= bw; ++h) {
        const double w = taper_weight(kernel_name, static_cast<double>(h) / bw);
        if (w == 0.0) continue;
        const MatRM gamma_h =
            (centered.bottomRows(t_len - h).transpose() * centered.topRows(t_len - h)) /
            static_cast<double>(t_len);
        kernel += w * (gamma_h + gamma_h.transpose());
    }
    return LongRunCovariance{std::move(kernel), bw, kernel_name};
}

double lrc_trace(const MatRM& series, const Grid& grid, int bandwidth,
                 TaperKernel kernel_name) {
    const Eigen::Index t_len = series.rows();
    if (t_len < 4) throw std::invalid_argument("lrc_trace: need at least 4 time points");
    if (series.cols() != grid.points.size())
        throw std::invalid_argument("lrc_trace: series/grid width mismatch");
    const int bw = resolve_bandwidth(bandwidth, t_len);

    MatRM centered = series;
    const Eigen::RowVectorXd time_mean = series.colwise().mean();
    centered.rowwise() -= time_mean;

    double trace = 0.0;
    for (Eigen::Index j = 0; j < grid.points.size(); ++j) {
        const auto col = centered.col(j);
        double pointwise = col.dot(col) / static_cast<double>(t_len);
        for (int h = 1; h <= bw; ++h) {
            const double w = taper_weight(kernel_name, static_cast<double>(h) / bw);
            if (w == 0.0) continue;
            pointwise += 2.0 * w *
                         (col.tail(t_len - h).dot(col.head(t_len - h)) /
                          static_cast<double>(t_len));
        }
        trace += grid.weights(j) * pointwise;
    }
    return trace;
}

Vec eigenvalues_of(const LongRunCovariance& lrc, const Grid& grid) {
    if (!lrc.kernel.allFinite())
        throw std::invalid_argument("eigenvalues_of: non-finite kernel");
    if (lrc.kernel.rows() != grid.points.size() ||
        lrc.kernel.cols() != grid.points.size())
        throw std::invalid_argument("eigenvalues_of: kernel/grid size mismatch");

    // Quadrature-weighted operator: spectrum of W^{1/2} K W^{1/2}.
    const Vec root_w = grid.weights.cwiseSqrt();
    Eigen::MatrixXd weighted =
        root_w.asDiagonal() * lrc.kernel * root_w.asDiagonal();
    // Symmetrize against accumulation noise before the self-adjoint solve.
    weighted = 0.5 * (weighted + weighted.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(weighted,
                                                          Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("eigenvalues_of: eigensolver failed");

    Vec eigs = solver.eigenvalues();  // ascending
    Vec out(eigs.size());
    for (Eigen::Index i = 0; i < eigs.size(); ++i)
        out(i) = std::max(0.0, eigs(eigs.size() - 1 - i));
    return out;
}

NullSpec make_null_spec(const Vec& eigenvalues, int bridge_grid, int n_draws,
                        std::uint64_t seed, double mass, int cap) {
    if (bridge_grid < 2) throw std::invalid_argument("null spec: bridge_grid < 2");
    if (n_draws < 1) throw std::invalid_argument("null spec: n_draws < 1");
    if (!(mass > 0.0 && mass <= 1.0))
        throw std::invalid_argument("null spec: mass outside (0,1]");
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
        if (eigenvalues(i) < 0.0)
            throw std::invalid_argument("null spec: negative eigenvalue");
        if (i > 0 && eigenvalues(i) > eigenvalues(i - 1))
            throw std::invalid_argument("null spec: eigenvalues must be non-increasing");
    }

    const double total = eigenvalues.sum();
    int keep = 0;
    double partial = 0.0;
    if (total > 0.0) {
        for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
            partial += eigenvalues(i);
            keep = static_cast<int>(i) + 1;
            if (partial >= mass * total) break;
        }
    }
    keep = std::min(keep, cap);
    return NullSpec{eigenvalues, keep, bridge_grid, n_draws, seed};
}

NullSpec estimate_null_spec(const FunctionalPanel& panel,
                            const NullEstimateOptions& opts) {
    const int n = panel.n_subjects();
    const int t_len = panel.n_times();
    const Grid& grid = panel.grid();

    MatRM mean(t_len, grid.size());
    if (opts.remove_step_means) {
        // Residualize each subject against its own best single-step mean so a
        // shared drift cannot masquerade as long-run covariance mass.
        mean.setZero();
        MatRM resid(t_len, grid.size());
        for (int i = 0; i < n; ++i) {
            const Vec obj = subject_objective(panel, i);
            int split = 1;
            double best = obj(0);
            for (int r = 1; r < t_len - 1; ++r)
                if (obj(r) > best) { best = obj(r); split = r + 1; }
            resid = panel.subject(i);
            const Eigen::RowVectorXd pre = resid.topRows(split).colwise().mean();
            const Eigen::RowVectorXd post =
                resid.bottomRows(t_len - split).colwise().mean();
            resid.topRows(split).rowwise() -= pre;
            resid.bottomRows(t_len - split).rowwise() -= post;
            mean += resid;
        }
        mean /= static_cast<double>(n);
    } else {
        mean = cross_sectional_mean(panel);
    }
    mean *= std::sqrt(static_cast<double>(n));

    const LongRunCovariance lrc =
        estimate_lrc(mean, grid, opts.bandwidth, opts.kernel_name);
    const Vec eigs = eigenvalues_of(lrc, grid);
    return make_null_spec(eigs, opts.bridge_grid, opts.n_draws, opts.seed,
                          opts.eigen_mass, grid.size());
}

std::vector<double> simulate_null(const NullSpec& spec, int threads) {
    if (spec.n_bridges < 1 || spec.eigenvalues.size() == 0 ||
        spec.eigenvalues(0) <= 0.0)
        throw std::domain_error("simulate_null: degenerate distribution (no positive eigenvalue)");
    if (spec.n_bridges > spec.eigenvalues.size())
        throw std::invalid_argument("simulate_null: n_bridges exceeds eigenvalue count");

    const int m = spec.bridge_grid;
    const int nb = spec.n_bridges;
    const double root_m = std::sqrt(static_cast<double>(m));

    std::vector<double> draws(spec.n_draws);
    parallel_for(spec.n_draws, threads, [&](int d) {
        std::mt19937_64 eng = rng::make_engine(spec.seed, kNullDrawStream,
                                               static_cast<std::uint64_t>(d));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> bridge(m);
        std::vector<double> acc(m, 0.0);
        for (int b = 0; b < nb; ++b) {
            const double lambda = spec.eigenvalues(b);
            double walk = 0.0;
            for (int gidx = 0; gidx < m; ++gidx) {
                walk += normal(eng) / root_m;
                bridge[gidx] = walk;
            }
            const double end = bridge[m - 1];
            for (int gidx = 0; gidx < m; ++gidx) {
                const double v =
                    bridge[gidx] -
                    (static_cast<double>(gidx + 1) / static_cast<double>(m)) * end;
                acc[gidx] += lambda * v * v;
            }
        }
        double sup = 0.0;
        for (int gidx = 0; gidx < m; ++gidx)
            if (acc[gidx] > sup) sup = acc[gidx];
        draws[d] = sup;
    });
    std::sort(draws.begin(), draws.end());
    return draws;
}

double critical_value(const std::vector<double>& sorted_draws, double alpha) {
    if (sorted_draws.empty()) throw std::invalid_argument("critical_value: no draws");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("critical_value: alpha outside (0,1)");
    const std::size_t n = sorted_draws.size();
    std::size_t rank = static_cast<std::size_t>(
        std::ceil((1.0 - alpha) * static_cast<double>(n)));
    if (rank < 1) rank = 1;
    if (rank > n) rank = n;
    return sorted_draws[rank - 1];
}

double p_value(const std::vector<double>& sorted_draws, double observed) {
    if (sorted_draws.empty()) throw std::invalid_argument("p_value: no draws");
    const auto lower =
        std::lower_bound(sorted_draws.begin(), sorted_draws.end(), observed);
    const std::size_t n_ge = static_cast<std::size_t>(sorted_draws.end() - lower);
    return static_cast<double>(1 + n_ge) /
           static_cast<double>(sorted_draws.size() + 1);
}

}  // namespace pecusum
