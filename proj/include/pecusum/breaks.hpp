// =============================================================================
// Post-rejection inference: subject classification, break-point estimation,
// largest-gap clustering, the information criterion IC(K) = ln V(K) + K*rho,
// and pooled within-cluster break estimates.
//
// Conventions: subject indices 0-based; break times are partial-sum counts in
// {1..T-1} (time t carries the first t observations before the break). Argmax
// ties resolve to the smallest index, gap ties to the earlier gap.
// =============================================================================
#pragma once

#include <map>
#include <utility>
#include <vector>

#include "pecusum/panel.hpp"
#include "pecusum/types.hpp"

namespace pecusum {

struct BreakReport {
    std::vector<int> with_breaks;     // ascending; sup >= xi
    std::vector<int> without_breaks;  // ascending; sup <  xi
    std::vector<int> tau_hat;         // aligned with with_breaks
    Vec sup_stats;                    // length N
    double xi = 0.0;
};

// Splits {0..N-1} by sups_i >= xi (flagged) vs < xi.
std::pair<std::vector<int>, std::vector<int>> classify_subjects(const Vec& sups,
                                                                double xi);

// sup stats + classification + break estimates for the flagged subjects.
BreakReport make_break_report(const FunctionalPanel& panel, double xi);

// argmax over t in {1..T-1} of subject i's CUSUM objective; smallest tie.
int estimate_breakpoint(const FunctionalPanel& panel, int i);

// Largest-gap clustering: sort tau ascending, cut at the k-1 largest
// consecutive gaps (ties to the earlier gap). Cluster j collects subjects with
// tau in [boundary_{j-1}, boundary_j), the last cluster closed at t_len.
// Clusters are ordered by break time; members ascend within a cluster.
// Throws std::invalid_argument if k < 1 or k > |subjects|.
std::vector<std::vector<int>> cluster_given_k(const std::vector<int>& subjects,
                                              const std::vector<int>& tau,
                                              int k, int t_len);

struct GroupParams {
    double tau_mean = 0.0;     // average member break time
    int split = 0;             // floor(tau_mean), the sample-split index
    std::vector<Vec> mu;       // per-member pre-break mean curve
    std::vector<Vec> delta;    // per-member post-minus-pre mean curve
};

// Fits the step means of one cluster. taus aligned with members.
// Throws std::domain_error when floor(mean tau) leaves an empty side.
GroupParams group_parameters(const FunctionalPanel& panel,
                             const std::vector<int>& members,
                             const std::vector<int>& taus);

// ln V(K) + K*rho, V(K) the average over flagged subjects of the per-time mean
// squared residual norm against the fitted cluster step means. Returns -inf
// when V(K) == 0 (noiseless exact fit); callers fall back to the smallest
// such K.
double information_criterion(const FunctionalPanel& panel,
                             const BreakReport& report, int k, double rho,
                             double* v_out = nullptr);

struct ClusterModel {
    int k = 0;
    std::vector<std::vector<int>> members;  // ordered by group_tau
    std::vector<double> group_tau;
    std::vector<int> pooled_b;              // filled by pooled_breakpoints
    std::map<int, double> ic_values;        // K -> IC(K)
};

// Minimizes IC over K in {1..k_bar}; smallest minimizer on ties; a -inf
// sentinel (exact fit) selects the smallest K achieving it. pooled_b is left
// empty. Throws std::invalid_argument when the flagged set is empty or
// k_bar exceeds its size.
ClusterModel select_k(const FunctionalPanel& panel, const BreakReport& report,
                      int k_bar, double rho);

// argmax over t of the summed member objectives; smallest tie.
int pooled_breakpoint(const FunctionalPanel& panel,
                      const std::vector<int>& members);

// pooled_breakpoint per cluster, skipping empty clusters (entry -1).
std::vector<int> pooled_breakpoints(const FunctionalPanel& panel,
                                    const std::vector<std::vector<int>>& members);

// Default IC penalty: (max(N,T))^{-1/2} * ln(max(N,T)).
double default_rho(int n, int t);

}  // namespace pecusum
