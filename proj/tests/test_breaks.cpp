#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "pecusum/breaks.hpp"
#include "pecusum/cusum.hpp"
#include "pecusum/panel.hpp"
#include "test_support.hpp"

using namespace pecusum;
using test_support::random_panel;

namespace {

// Subjects with independent noiseless steps: subject i jumps by `jumps[i]`
// after time `taus[i]` (1-based partial-sum count).
FunctionalPanel steps_panel(const std::vector<int>& taus,
                            const std::vector<double>& jumps, int t_len,
                            int g = 7) {
    FunctionalPanel p(static_cast<int>(taus.size()), t_len, make_uniform_grid(g));
    for (std::size_t i = 0; i < taus.size(); ++i)
        for (int t = taus[i]; t < t_len; ++t)
            p.curve(static_cast<int>(i), t).setConstant(jumps[i]);
    return p;
}

}  // namespace

TEST_CASE("classification splits on the threshold inclusively") {
    Vec sups(4);
    sups << 1.0, 2.0, 3.0, 2.0;
    const auto [flagged, clear] = classify_subjects(sups, 2.0);
    CHECK(flagged == std::vector<int>{1, 2, 3});
    CHECK(clear == std::vector<int>{0});

    const auto [none, all] = classify_subjects(Vec::Zero(3), 0.5);
    CHECK(none.empty());
    CHECK(all.size() == 3);
    CHECK_THROWS_AS(classify_subjects(sups, 0.0), std::invalid_argument);
}

TEST_CASE("break report aligns estimates with flagged subjects") {
    const FunctionalPanel p = steps_panel({40, 0}, {2.0, 0.0}, 100);
    // Subject 1 never changes: zero sup. Subject 0 has a clean break at 40.
    const BreakReport report = make_break_report(p, 1.0);
    CHECK(report.with_breaks == std::vector<int>{0});
    CHECK(report.without_breaks == std::vector<int>{1});
    REQUIRE(report.tau_hat.size() == 1);
    CHECK(report.tau_hat[0] == 40);
    CHECK(report.sup_stats.size() == 2);
    CHECK(report.xi == 1.0);
}

TEST_CASE("breakpoint estimation on noiseless and degenerate series") {
    const FunctionalPanel p = steps_panel({50}, {1.0}, 100);
    CHECK(estimate_breakpoint(p, 0) == 50);

    // Constant series: the objective vanishes, ties resolve to t = 1.
    FunctionalPanel flat(1, 64, make_uniform_grid(3));
    for (int t = 0; t < 64; ++t) flat.curve(0, t).setConstant(3.0);
    CHECK(estimate_breakpoint(flat, 0) == 1);
}

TEST_CASE("breakpoint estimation equals the exhaustive scan") {
    std::mt19937_64 eng(41);
    for (int rep = 0; rep < 5; ++rep) {
        const FunctionalPanel p = random_panel(1, 60, 5, eng);
        CHECK(estimate_breakpoint(p, 0) == test_support::ref_subject_argmax(p, 0));
    }
}

TEST_CASE("largest-gap clustering handles the documented cases") {
    // One dominant gap.
    CHECK(cluster_given_k({0, 1, 2, 3, 4}, {10, 10, 10, 50, 50}, 2, 200) ==
          std::vector<std::vector<int>>{{0, 1, 2}, {3, 4}});
    // k = 1 keeps everyone together.
    CHECK(cluster_given_k({0, 1, 2, 3, 4}, {10, 10, 10, 50, 50}, 1, 200) ==
          std::vector<std::vector<int>>{{0, 1, 2, 3, 4}});
    // Equal gaps cut at the earlier one.
    CHECK(cluster_given_k({0, 1, 2}, {10, 20, 30}, 2, 100) ==
          std::vector<std::vector<int>>{{0}, {1, 2}});
    CHECK(cluster_given_k({0, 1, 2}, {10, 20, 30}, 3, 100) ==
          std::vector<std::vector<int>>{{0}, {1}, {2}});
    // Input order does not matter; membership sorts by break time.
    CHECK(cluster_given_k({0, 1}, {44, 40}, 2, 100) ==
          std::vector<std::vector<int>>{{1}, {0}});

    CHECK_THROWS_AS(cluster_given_k({0, 1}, {10, 20}, 3, 100),
                    std::invalid_argument);
    CHECK_THROWS_AS(cluster_given_k({0, 1}, {10, 20}, 0, 100),
                    std::invalid_argument);
}

TEST_CASE("clustering union and disjointness hold") {
    std::mt19937_64 eng(42);
    std::uniform_int_distribution<int> tau_dist(1, 99);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 2 + static_cast<int>(eng() % 7);
        std::vector<int> subjects(n), taus(n);
        for (int i = 0; i < n; ++i) {
            subjects[i] = i;
            taus[i] = tau_dist(eng);
        }
        const int k = 1 + static_cast<int>(eng() % n);
        const auto clusters = cluster_given_k(subjects, taus, k, 100);
        REQUIRE(static_cast<int>(clusters.size()) == k);
        std::vector<int> all;
        for (const auto& c : clusters) all.insert(all.end(), c.begin(), c.end());
        std::sort(all.begin(), all.end());
        CHECK(all == subjects);
    }
}

TEST_CASE("group parameters average member break times") {
    const FunctionalPanel p = steps_panel({40, 44}, {1.0, 2.0}, 100);
    const GroupParams params = group_parameters(p, {0, 1}, {40, 44});
    CHECK(params.tau_mean == Catch::Approx(42.0).margin(1e-14));
    CHECK(params.split == 42);
    REQUIRE(params.mu.size() == 2);
    // Subject 0 breaks at 40 < split: the pre-mean mixes 40 zeros and 2 ones.
    CHECK(params.mu[0](0) == Catch::Approx(2.0 / 42.0).margin(1e-12));
    // Subject 1 breaks at 44 > split: pre-mean is exactly zero.
    CHECK(params.mu[1](0) == Catch::Approx(0.0).margin(1e-14));
    // Jumps recover as post minus pre averages.
    const double post0 = 1.0;
    CHECK(params.delta[0](0) ==
          Catch::Approx(post0 - 2.0 / 42.0).margin(1e-12));

    // A same-break cluster recovers the jump exactly.
    const FunctionalPanel q = steps_panel({30, 30}, {1.5, -0.5}, 90);
    const GroupParams exact = group_parameters(q, {0, 1}, {30, 30});
    CHECK(exact.split == 30);
    CHECK(exact.delta[0](0) == Catch::Approx(1.5).margin(1e-14));
    CHECK(exact.delta[1](0) == Catch::Approx(-0.5).margin(1e-14));
}

TEST_CASE("information criterion separates right and wrong cluster counts") {
    // Three noiseless groups, two subjects each, distinct break times. Five
    // grid points make the trapezoid weights dyadic, so the exact-fit
    // residual cancels to zero without rounding and V(3) is exactly 0.
    const FunctionalPanel p =
        steps_panel({30, 30, 60, 60, 90, 90}, {1.0, 2.0, -1.0, 1.5, 0.5, 2.5},
                    120, 5);
    const BreakReport report = make_break_report(p, 1e-6);
    REQUIRE(report.with_breaks.size() == 6);
    CHECK(report.tau_hat == std::vector<int>{30, 30, 60, 60, 90, 90});

    double v1 = -1.0, v3 = -1.0;
    const double ic1 = information_criterion(p, report, 1, 0.1, &v1);
    const double ic3 = information_criterion(p, report, 3, 0.1, &v3);
    CHECK(v1 > 0.0);
    CHECK(v3 == 0.0);
    CHECK(std::isinf(ic3));
    CHECK(ic3 < ic1);

    // Exact fits select the smallest degenerate K.
    const ClusterModel model = select_k(p, report, 6, 0.1);
    CHECK(model.k == 3);
    CHECK(model.members ==
          std::vector<std::vector<int>>{{0, 1}, {2, 3}, {4, 5}});
    CHECK(model.group_tau == std::vector<double>{30.0, 60.0, 90.0});
    CHECK(model.ic_values.size() == 6);
    CHECK(model.pooled_b.empty());
}

TEST_CASE("select_k ic map matches direct evaluation") {
    std::mt19937_64 eng(43);
    FunctionalPanel p = random_panel(5, 40, 4, eng);
    for (int i = 0; i < 5; ++i)
        for (int t = 8 * (i + 1); t < 40; ++t) p.curve(i, t).array() += 3.0;
    const BreakReport report = make_break_report(p, 1e-8);
    REQUIRE(report.with_breaks.size() == 5);
    const ClusterModel model = select_k(p, report, 4, 0.25);
    for (const auto& [k, ic] : model.ic_values)
        CHECK(ic == Catch::Approx(information_criterion(p, report, k, 0.25))
                        .margin(1e-10));
    CHECK(model.ic_values.count(model.k) == 1);
    for (const auto& [k, ic] : model.ic_values)
        CHECK(model.ic_values.at(model.k) <= ic + 1e-12);
}

TEST_CASE("single flagged subject always selects one cluster") {
    const FunctionalPanel p = steps_panel({50}, {1.0}, 100);
    const BreakReport report = make_break_report(p, 1e-6);
    const ClusterModel model = select_k(p, report, 1, 0.5);
    CHECK(model.k == 1);
    CHECK(model.members == std::vector<std::vector<int>>{{0}});
    CHECK_THROWS_AS(select_k(p, report, 2, 0.5), std::invalid_argument);
}

TEST_CASE("select_k requires a nonempty flagged set") {
    const FunctionalPanel p(2, 10, make_uniform_grid(3));
    const BreakReport report = make_break_report(p, 1.0);
    CHECK(report.with_breaks.empty());
    CHECK_THROWS_AS(select_k(p, report, 1, 0.5), std::invalid_argument);
}

TEST_CASE("zero penalty orders the criterion by fit alone") {
    const FunctionalPanel p =
        steps_panel({30, 30, 60, 60, 90, 90}, {1.0, 2.0, -1.0, 1.5, 0.5, 2.5},
                    120);
    const BreakReport report = make_break_report(p, 1e-6);
    double v = -1.0;
    const double ic = information_criterion(p, report, 2, 0.0, &v);
    CHECK(ic == Catch::Approx(std::log(v)).margin(1e-14));
}

TEST_CASE("pooled breakpoint on clean clusters") {
    const FunctionalPanel p = steps_panel({40, 40, 40}, {1.0, -2.0, 0.5}, 100);
    CHECK(pooled_breakpoint(p, {0, 1, 2}) == 40);
    // Size-one pooling equals the per-subject estimate.
    CHECK(pooled_breakpoint(p, {1}) == estimate_breakpoint(p, 1));

    const std::vector<int> b =
        pooled_breakpoints(p, {{0, 2}, {}, {1}});
    REQUIRE(b.size() == 3);
    CHECK(b[0] == 40);
    CHECK(b[1] == -1);
    CHECK(b[2] == 40);
}

TEST_CASE("classification and clustering are scale equivariant") {
    std::mt19937_64 eng(44);
    FunctionalPanel p = random_panel(4, 30, 5, eng);
    for (int i = 0; i < 4; ++i)
        for (int t = 6 * (i + 1); t < 30; ++t) p.curve(i, t).array() += 2.0;

    const double c = 3.0;
    FunctionalPanel scaled(4, 30, p.grid());
    scaled.data() = c * p.data();

    const Vec sups = subject_sup_stats(p);
    const Vec sups_scaled = subject_sup_stats(scaled);
    for (int i = 0; i < 4; ++i)
        CHECK(sups_scaled(i) == Catch::Approx(c * c * sups(i)).epsilon(1e-12));

    const double xi = 0.4;
    const BreakReport a = make_break_report(p, xi);
    const BreakReport b = make_break_report(scaled, c * c * xi);
    CHECK(a.with_breaks == b.with_breaks);
    CHECK(a.tau_hat == b.tau_hat);

    if (!a.with_breaks.empty()) {
        const int k_bar = static_cast<int>(a.with_breaks.size());
        const ClusterModel ma = select_k(p, a, k_bar, 0.3);
        const ClusterModel mb = select_k(scaled, b, k_bar, 0.3);
        CHECK(ma.k == mb.k);
        CHECK(ma.members == mb.members);
    }
}

TEST_CASE("default penalty matches the published rule") {
    CHECK(default_rho(200, 200) ==
          Catch::Approx(0.3746476138764567).margin(1e-13));
    CHECK(default_rho(100, 200) == default_rho(200, 100));
    CHECK(default_rho(200, 400) ==
          Catch::Approx(std::log(400.0) / std::sqrt(400.0)).margin(1e-14));
}
