// =============================================================================
// CUSUM functionals and the power-enhanced test.
//
// Pooled field:  Z(t/T, u) = sqrt(N/T) * [S(t,u) - (t/T) * S(T,u)], where S is
// the running sum of cross-sectional mean curves. Subject field: same shape on
// one subject's series with scale 1/sqrt(T). Row r of a field holds partial-sum
// count t = r+1; the row at t = T is identically zero.
//
// The power enhancement adds sqrt(max(N,T)) per subject whose sup-CUSUM
// exceeds a screening threshold xi; the combined statistic is their sum.
// =============================================================================
#pragma once

#include <optional>
#include <vector>

#include "pecusum/nulldist.hpp"
#include "pecusum/panel.hpp"
#include "pecusum/types.hpp"

namespace pecusum {

enum class CusumScale { Pooled, Subject };

struct CusumField {
    MatRM values;  // T x G; row r = Z((r+1)/T, .)
    Grid grid;
    CusumScale scale = CusumScale::Pooled;
};

CusumField pooled_cusum(const FunctionalPanel& panel);

// Subject i's CUSUM field (0-based index).
CusumField subject_cusum(const FunctionalPanel& panel, int i);

// max over t in {1..T} of the quadrature integral of the squared row.
double cusum_statistic(const CusumField& field);

// Integral of the squared field row per t: entry r = int Z((r+1)/T, u)^2 du.
Vec cusum_objective(const CusumField& field);

// Subject i's objective vector without materializing the field.
Vec subject_objective(const FunctionalPanel& panel, int i);

// Entry i = sup over t of subject i's objective.
Vec subject_sup_stats(const FunctionalPanel& panel);

// Screening-threshold variants:
//   Xi1: c_xi * ln(N*T)      * lnln(N*T)
//   Xi2: c_xi * ln(max(N,T)) * lnln(max(N,T))
enum class XiVariant { Xi1, Xi2 };

struct PeConfig {
    XiVariant variant = XiVariant::Xi2;
    // Explicit constant; unset selects the data-driven sqrt(lambda1) from the
    // fitted null spec inside pe_cusum_test.
    std::optional<double> c_xi;
};

// Threshold formula for the selected variant. Requires cfg.c_xi set and the
// log-log argument > 1 (max(N,T) >= 3 for Xi2, N*T >= 3 for Xi1).
double threshold(const PeConfig& cfg, int n, int t);

// sqrt(max(N,T)) * #{i : sups_i > xi}; strict inequality.
double pe_component(const Vec& sups, double xi, int n, int t);

struct TestResult {
    double z_nt = 0.0;       // pooled CUSUM statistic
    double z_pe = 0.0;       // power-enhancement component
    double z_hat = 0.0;      // z_nt + z_pe
    double threshold = 0.0;  // xi actually used
    std::optional<double> p_value;
    Vec subject_sups;
};

// Full test. When `null` is given, a data-driven c_xi resolves to
// sqrt(null->eigenvalues[0]) and p_value is filled from null draws:
// `sorted_draws` if provided, otherwise simulate_null(*null) is run here.
TestResult pe_cusum_test(const FunctionalPanel& panel, const PeConfig& cfg,
                         const NullSpec* null = nullptr,
                         const std::vector<double>* sorted_draws = nullptr);

}  // namespace pecusum
