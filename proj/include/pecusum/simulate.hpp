// =============================================================================
// Monte-Carlo engine: Fourier-basis error curves driven by a banded VAR(1),
// SNR-calibrated break injection, evaluation metrics, and the replication
// harness.
//
// Error model per subject i, time t:
//   eps_it(u) = sum_j (beta_it,j + eta_it,j) f_j(u)
// with beta_t,j an N-vector VAR(1) (banded coefficient matrix, identity
// innovation covariance, burn-in from zero) and eta_it,j ~ N(0, 1/j), where
// f_1..f_J is a per-replication random permutation of the orthonormal Fourier
// system. Breaks add delta_i(u) = sqrt(c*_i) * (1/sqrt(m)) * sum_{j<=m} f_j(u)
// from time tau_i + 1 on, with c*_i chosen so that
//   (tau/T)(1 - tau/T) * ||delta||^2 / tr(LRC of eps_i) = SNR.
// =============================================================================
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pecusum/breaks.hpp"
#include "pecusum/cusum.hpp"
#include "pecusum/panel.hpp"
#include "pecusum/types.hpp"

namespace pecusum {

struct DgpConfig {
    int n = 200;
    int t = 200;
    int grid_size = 101;
    int j_basis = 21;
    // Half-bandwidth of the VAR coefficient matrix; negative disables the VAR
    // coupling entirely (A = 0, iid coefficients).
    int var_band = 3;
    double var_coef_lo = -0.3;
    double var_coef_hi = 0.3;
    int burn_in = 100;
    double sdr = 0.1;   // fraction of subjects carrying a break
    double snr = 0.1;
    int m = 1;          // break-direction count, 1 <= m <= j_basis
    double window_lo = 0.25;  // break times uniform on {ceil(lo*T)..floor(hi*T)}
    double window_hi = 0.75;
    // Nonempty activates the grouped design: the last floor(sdr*N) subjects
    // carry breaks, split into contiguous equal groups (remainder to the later
    // groups) with group g breaking at round(frac_g * T).
    std::vector<double> k0_break_fracs;
    std::uint64_t seed = 0;
};

struct GroundTruth {
    std::vector<int> break_set;              // ascending subject indices
    std::vector<int> tau;                    // aligned with break_set
    std::vector<Vec> delta;                  // aligned with break_set
    std::vector<std::vector<int>> clusters;  // grouped design only
    std::vector<int> cluster_b;              // aligned with clusters
    std::vector<int> basis_order;            // permutation of {0..20} used
    Eigen::MatrixXd a_matrix;                // realized VAR coefficients
};

// The orthonormal Fourier system on [0,1] in standard order: constant,
// sqrt(2)cos(2*pi*k*u), sqrt(2)sin(2*pi*k*u), k = 1..10. Rows = functions.
// Throws std::invalid_argument for j_basis outside {1..21}.
MatRM fourier_basis(int j_basis, const Grid& grid);

// Banded coefficient matrix with independent U(lo, hi) entries inside
// |i-j| <= band; redrawn until the spectral radius is < 1 (at most 100
// attempts). band < 0 returns the zero matrix.
Eigen::MatrixXd draw_var_matrix(int n, int band, double lo, double hi,
                                std::mt19937_64& eng);

// Error panel (no breaks). a_out, when given, receives the realized VAR
// matrix. Deterministic given cfg.seed.
FunctionalPanel gen_errors(const DgpConfig& cfg, Eigen::MatrixXd* a_out = nullptr);

// sqrt(c_star) * (1/sqrt(m)) * sum of the first m basis rows.
Vec break_function(int m, double c_star, const MatRM& basis);

// c* = snr * tr(Omega_eps,i) / [(tau/T)(1 - tau/T)] with the closed-form trace
// j_basis * [(I-A)^{-1} (I-A^T)^{-1}]_{ii} + sum_{j=1}^{j_basis} 1/j.
// Throws std::domain_error when (I - A) is singular.
double calibrate_c_star(double snr, int tau, int t,
                        const Eigen::MatrixXd& a_matrix, int i, int j_basis);

double harmonic_number(int j);

// Full panel: gen_errors + break selection + calibrated injection. When
// errors_out is given it receives the pre-injection error panel; unbroken
// cells match the panel bit-exactly, broken cells differ by the injected
// step up to one rounding of the addition.
FunctionalPanel gen_panel(const DgpConfig& cfg, GroundTruth& truth,
                          FunctionalPanel* errors_out = nullptr);

// ---------------------------------------------------------------------------
// Evaluation metrics
// ---------------------------------------------------------------------------

struct ClassificationMetrics {
    double tp_rate = 0.0;  // correct-classification count / n (both classes)
    double recall = 0.0;   // |est & truth| / |truth| (1 when truth empty)
    double f1 = 0.0;       // tp / (tp + (fp + fn)/2); 1 when all three zero
    int tp = 0, fp = 0, fn = 0;
};

ClassificationMetrics metrics_tp_f1(const std::vector<int>& estimated,
                                    const std::vector<int>& truth, int n);

// Purity = (1/n) sum_k max_j |E_k & T_j|; NMI = 2 I(E,T)/(H(E)+H(T)), log2,
// from the contingency |E_k & T_j|/n. Both-degenerate entropies give NMI 1.
// n is the caller's normalizer (size of the partitioned set).
std::pair<double, double> metrics_clustering(
    const std::vector<std::vector<int>>& estimated,
    const std::vector<std::vector<int>>& truth, int n);

// Mean over groups of (b_hat - b_true)^2; requires equal group counts.
double metric_msd(const std::vector<int>& b_hat, const std::vector<int>& b_true);

// ---------------------------------------------------------------------------
// Replication harness
// ---------------------------------------------------------------------------

struct RunFlags {
    bool critical_values = true;   // simulate null draws (slowest stage)
    bool classify = true;
    bool cluster = false;
    bool realized_snr = false;
    bool share_null_across_reps = false;
    bool remove_step_means = false;  // pre-whiten the null-spec estimation
    std::vector<double> alphas = {0.01, 0.05, 0.10};
    double rho = -1.0;             // < 0 selects default_rho(N, T)
    int k_bar = 10;                // capped at the flagged-set size
    int n_draws = 5000;
    int bridge_grid = 1000;
    int lrc_bandwidth = kAutoBandwidth;
    TaperKernel kernel_name = TaperKernel::Bartlett;
    int threads = 1;
};

struct RepRecord {
    int rep = 0;
    std::uint64_t seed = 0;
    double lambda1 = 0.0;  // leading eigenvalue driving the data-driven c_xi
    double z_nt = 0.0;
    double z_pe_xi1 = 0.0;
    double z_pe_xi2 = 0.0;
    double xi1 = 0.0;
    double xi2 = 0.0;
    std::vector<double> crit;  // aligned with flags.alphas; empty if disabled
    ClassificationMetrics cls_xi1, cls_xi2;
    int k_hat = 0;
    double purity = 0.0, nmi = 0.0;
    double msd_pre = 0.0, msd_post = 0.0;  // NaN when undefined
    std::vector<double> ic;                // IC(1..K_bar)
    double realized_snr = 0.0;             // NaN when no break subjects
    std::string error;                     // nonempty marks a failed rep
};

// Runs r independent replications of the pipeline selected by `flags`;
// replication j is seeded from (cfg.seed, j) and the output is byte-identical
// for identical inputs regardless of flags.threads. Failed replications carry
// their error message instead of being dropped.
std::vector<RepRecord> run_experiment(const DgpConfig& cfg, int r,
                                      const RunFlags& flags);

}  // namespace pecusum
