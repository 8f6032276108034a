// =============================================================================
// Null distribution machinery: long-run covariance estimation, operator
// eigenvalues, and Monte-Carlo simulation of the limit law
//   sup_x sum_i lambda_i * B_i(x)^2,  B_i independent standard Brownian bridges.
//
// Eigenvalues come from the quadrature-weighted kernel matrix W^{1/2} K W^{1/2}
// so they approximate the integral operator's spectrum, not raw matrix
// eigenvalues. Simulation draws are deterministic given NullSpec.seed and do
// not depend on the worker count (per-draw derived seeding).
// =============================================================================
#pragma once

#include <cstdint>
#include <vector>

#include "pecusum/panel.hpp"
#include "pecusum/types.hpp"

namespace pecusum {

enum class TaperKernel { Bartlett, FlatTop };

// bandwidth = kAutoBandwidth selects floor(T^{1/3}).
inline constexpr int kAutoBandwidth = -1;

struct LongRunCovariance {
    MatRM kernel;        // G x G, symmetric
    int bandwidth = 0;   // lags |h| <= bandwidth enter the sum
    TaperKernel kernel_name = TaperKernel::Bartlett;
};

// Kernel estimate K(u_j, u_k) = sum_{|h|<=bw} w(h/bw) * gamma_h(u_j, u_k) from
// the time-demeaned series (rows = time). bw = 0 keeps only gamma_0.
// Throws std::invalid_argument for T < 4 or bandwidth >= T.
LongRunCovariance estimate_lrc(const MatRM& series, const Grid& grid,
                               int bandwidth = kAutoBandwidth,
                               TaperKernel kernel_name = TaperKernel::Bartlett);

// Trace of the long-run covariance operator estimated from the diagonal only:
// integral over u of the tapered pointwise autocovariance sum. Cheaper than
// estimate_lrc + eigensolve when only the trace is needed.
double lrc_trace(const MatRM& series, const Grid& grid,
                 int bandwidth = kAutoBandwidth,
                 TaperKernel kernel_name = TaperKernel::Bartlett);

// Operator eigenvalues: spectrum of W^{1/2} K W^{1/2} with W = diag(weights),
// negatives clipped to zero, sorted descending. Length = grid size.
Vec eigenvalues_of(const LongRunCovariance& lrc, const Grid& grid);

struct NullSpec {
    Vec eigenvalues;         // non-increasing, nonnegative
    int n_bridges = 0;       // leading eigenvalues actually simulated
    int bridge_grid = 1000;  // time-lattice resolution of each bridge
    int n_draws = 5000;
    std::uint64_t seed = 0;
};

// Truncates a descending eigenvalue vector: keeps the smallest n whose partial
// sum reaches `mass` of the total, capped at `cap`.
NullSpec make_null_spec(const Vec& eigenvalues, int bridge_grid, int n_draws,
                        std::uint64_t seed, double mass = 0.99,
                        int cap = 1 << 30);

struct NullEstimateOptions {
    int bandwidth = kAutoBandwidth;
    TaperKernel kernel_name = TaperKernel::Bartlett;
    // Removes each subject's fitted single-step mean (break location from that
    // subject's own CUSUM argmax) before forming the cross-sectional mean.
    // Guards the eigenvalues against drift contamination when breaks are
    // suspected; off by default.
    bool remove_step_means = false;
    int bridge_grid = 1000;
    int n_draws = 5000;
    std::uint64_t seed = 0;
    double eigen_mass = 0.99;
};

// Fits the null spec from a panel: eigenvalues of the long-run covariance of
// the sqrt(N)-scaled cross-sectional mean series, truncated per options.
NullSpec estimate_null_spec(const FunctionalPanel& panel,
                            const NullEstimateOptions& opts);

// Monte-Carlo draws of sup_x sum_i lambda_i B_i(x)^2 over the bridge lattice,
// sorted ascending. Throws std::domain_error if all eigenvalues are zero.
std::vector<double> simulate_null(const NullSpec& spec, int threads = 1);

// Empirical upper-alpha quantile: order statistic ceil((1-alpha)*n), 1-based.
double critical_value(const std::vector<double>& sorted_draws, double alpha);

// Add-one p-value: (1 + #{draws >= observed}) / (n + 1).
double p_value(const std::vector<double>& sorted_draws, double observed);

}  // namespace pecusum
