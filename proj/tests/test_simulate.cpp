#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "pecusum/grid.hpp"
#include "pecusum/simulate.hpp"

using namespace pecusum;

namespace {

DgpConfig tiny_config() {
    DgpConfig cfg;
    cfg.n = 8;
    cfg.t = 24;
    cfg.grid_size = 21;
    cfg.j_basis = 5;
    cfg.burn_in = 30;
    cfg.sdr = 0.25;
    cfg.snr = 0.5;
    cfg.seed = 77;
    return cfg;
}

}  // namespace

TEST_CASE("fourier basis is orthonormal under quadrature") {
    const Grid grid = make_uniform_grid(101);
    const MatRM basis = fourier_basis(21, grid);
    REQUIRE(basis.rows() == 21);
    for (int j = 0; j < 101; ++j) CHECK(basis(0, j) == 1.0);
    for (int a = 0; a < 21; ++a)
        for (int b = a; b < 21; ++b) {
            const double inner =
                l2_inner(basis.row(a).transpose(), basis.row(b).transpose(), grid);
            CHECK(inner == Catch::Approx(a == b ? 1.0 : 0.0).margin(1e-3));
        }
    CHECK_THROWS_AS(fourier_basis(22, grid), std::invalid_argument);
    CHECK_THROWS_AS(fourier_basis(0, grid), std::invalid_argument);
}

TEST_CASE("var matrix draw respects the band and stability") {
    std::mt19937_64 eng(51);
    const Eigen::MatrixXd a = draw_var_matrix(12, 3, -0.3, 0.3, eng);
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j) {
            if (std::abs(i - j) > 3) {
                CHECK(a(i, j) == 0.0);
            } else {
                CHECK(a(i, j) >= -0.3);
                CHECK(a(i, j) <= 0.3);
            }
        }
    const Eigen::VectorXcd eigs =
        Eigen::EigenSolver<Eigen::MatrixXd>(a, false).eigenvalues();
    double radius = 0.0;
    for (Eigen::Index i = 0; i < eigs.size(); ++i)
        radius = std::max(radius, std::abs(eigs(i)));
    CHECK(radius < 1.0);

    CHECK(draw_var_matrix(5, -1, -0.3, 0.3, eng).isZero(0.0));

    // Entries pinned at 0.3 with band 3 cannot be stable: 100 draws then fail.
    CHECK_THROWS_AS(draw_var_matrix(50, 3, 0.3, 0.3, eng), std::runtime_error);
}

TEST_CASE("iid coefficient variances follow 1 + 1/j") {
    // var_band < 0 turns off the VAR coupling, so coefficient (i,t,j) has
    // variance 1 (innovation) + 1/j (idiosyncratic ladder).
    DgpConfig cfg;
    cfg.n = 40;
    cfg.t = 50;
    cfg.grid_size = 201;
    cfg.j_basis = 3;
    cfg.var_band = -1;
    cfg.burn_in = 5;
    cfg.sdr = 0.0;
    cfg.seed = 52;
    GroundTruth truth;
    const FunctionalPanel panel = gen_panel(cfg, truth);
    REQUIRE(truth.basis_order.size() == 3);

    const Grid grid = panel.grid();
    const MatRM system = fourier_basis(21, grid);
    for (int slot = 0; slot < 3; ++slot) {
        const Vec f = system.row(truth.basis_order[slot]).transpose();
        double sum_sq = 0.0;
        const int count = cfg.n * cfg.t;
        for (int i = 0; i < cfg.n; ++i)
            for (int t = 0; t < cfg.t; ++t) {
                const double c = l2_inner(panel.curve(i, t).transpose(), f, grid);
                sum_sq += c * c;
            }
        const double want = 1.0 + 1.0 / (slot + 1);
        CHECK(sum_sq / count == Catch::Approx(want).epsilon(0.10));
    }
}

TEST_CASE("VAR lag-one autocovariance matches Yule-Walker") {
    DgpConfig cfg;
    cfg.n = 10;
    cfg.t = 20000;
    cfg.grid_size = 51;
    cfg.j_basis = 1;
    cfg.var_band = 2;
    cfg.sdr = 0.0;
    cfg.seed = 53;
    GroundTruth truth;
    const FunctionalPanel panel = gen_panel(cfg, truth);
    const Eigen::MatrixXd& a = truth.a_matrix;

    // Recover the scalar coefficients by projection on the basis function.
    const Grid grid = panel.grid();
    const Vec f =
        fourier_basis(21, grid).row(truth.basis_order[0]).transpose();
    Eigen::MatrixXd coef(cfg.n, cfg.t);
    for (int i = 0; i < cfg.n; ++i)
        for (int t = 0; t < cfg.t; ++t)
            coef(i, t) = l2_inner(panel.curve(i, t).transpose(), f, grid);

    // Stationary solution of Gamma0 = A Gamma0 A' + I via vectorization.
    const int n2 = cfg.n * cfg.n;
    Eigen::MatrixXd kron(n2, n2);
    for (int r1 = 0; r1 < cfg.n; ++r1)
        for (int c1 = 0; c1 < cfg.n; ++c1)
            for (int r2 = 0; r2 < cfg.n; ++r2)
                for (int c2 = 0; c2 < cfg.n; ++c2)
                    kron(r1 * cfg.n + r2, c1 * cfg.n + c2) = a(r1, c1) * a(r2, c2);
    Eigen::VectorXd vec_eye(n2);
    for (int r = 0; r < cfg.n; ++r)
        for (int c = 0; c < cfg.n; ++c) vec_eye(r * cfg.n + c) = r == c ? 1.0 : 0.0;
    const Eigen::VectorXd vec_gamma =
        (Eigen::MatrixXd::Identity(n2, n2) - kron).lu().solve(vec_eye);
    Eigen::MatrixXd gamma0(cfg.n, cfg.n);
    for (int r = 0; r < cfg.n; ++r)
        for (int c = 0; c < cfg.n; ++c) gamma0(r, c) = vec_gamma(r * cfg.n + c);

    // beta carries the VAR; the iid ladder adds 1/j at lag zero only, so the
    // lag-one autocovariance of the total coefficients is A * Gamma0(beta).
    const Eigen::MatrixXd want = a * gamma0;
    Eigen::MatrixXd got = Eigen::MatrixXd::Zero(cfg.n, cfg.n);
    for (int t = 1; t < cfg.t; ++t)
        got += coef.col(t) * coef.col(t - 1).transpose();
    got /= (cfg.t - 1);
    // n^2 sample-covariance entries each carry O(1/sqrt(T)) noise against a
    // target of norm ~1, so the Frobenius band is wide; the cosine check still
    // pins the orientation (a transposed target scores far below it).
    CHECK((got - want).norm() / want.norm() < 0.2);
    const double cosine =
        (got.array() * want.array()).sum() / (got.norm() * want.norm());
    CHECK(cosine > 0.95);
    const double cosine_t =
        (got.array() * want.transpose().array()).sum() /
        (got.norm() * want.norm());
    CHECK(cosine > cosine_t + 0.2);
}

TEST_CASE("break function norm equals its calibration constant") {
    const Grid grid = make_uniform_grid(101);
    const MatRM basis = fourier_basis(5, grid);
    const Vec delta = break_function(3, 2.0, basis);
    CHECK(l2_norm_sq(delta, grid) == Catch::Approx(2.0).margin(2e-3));
    CHECK(l2_norm_sq(break_function(1, 0.0, basis), grid) == 0.0);
    CHECK_THROWS_AS(break_function(6, 1.0, basis), std::invalid_argument);
}

TEST_CASE("harmonic numbers") {
    CHECK(harmonic_number(0) == 0.0);
    CHECK(harmonic_number(1) == 1.0);
    CHECK(harmonic_number(2) == 1.5);
    CHECK(harmonic_number(21) == Catch::Approx(3.6453587047627294).margin(1e-14));
}

TEST_CASE("calibration uses the closed-form trace") {
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(5, 5);
    // A = 0: trace = j_basis + H(j_basis); tau at mid-sample gives x(1-x)=1/4.
    CHECK(calibrate_c_star(1.0, 100, 200, zero, 2, 21) ==
          Catch::Approx(98.58143481905091).margin(1e-10));
    CHECK(calibrate_c_star(0.0, 100, 200, zero, 2, 21) == 0.0);
    // Linear in snr.
    const double base = calibrate_c_star(0.3, 60, 200, zero, 1, 7);
    CHECK(calibrate_c_star(0.6, 60, 200, zero, 1, 7) == 2.0 * base);

    CHECK_THROWS_AS(calibrate_c_star(1.0, 0, 200, zero, 0, 21),
                    std::invalid_argument);
    CHECK_THROWS_AS(calibrate_c_star(1.0, 200, 200, zero, 0, 21),
                    std::invalid_argument);
    const Eigen::MatrixXd singular = Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(calibrate_c_star(1.0, 50, 100, singular, 0, 5),
                    std::domain_error);
}

TEST_CASE("zero SDR and zero SNR leave the errors untouched") {
    DgpConfig cfg = tiny_config();
    cfg.sdr = 0.0;
    GroundTruth truth;
    FunctionalPanel errors(1, 2, make_uniform_grid(2));
    const FunctionalPanel panel = gen_panel(cfg, truth, &errors);
    CHECK(truth.break_set.empty());
    CHECK(truth.tau.empty());
    CHECK(panel.data() == errors.data());

    DgpConfig quiet = tiny_config();
    quiet.snr = 0.0;
    GroundTruth t2;
    FunctionalPanel e2(1, 2, make_uniform_grid(2));
    const FunctionalPanel p2 = gen_panel(quiet, t2, &e2);
    CHECK_FALSE(t2.break_set.empty());
    CHECK(p2.data() == e2.data());
}

TEST_CASE("gen_errors and gen_panel share the error realization") {
    DgpConfig cfg = tiny_config();
    Eigen::MatrixXd a;
    const FunctionalPanel errors = gen_errors(cfg, &a);
    GroundTruth truth;
    FunctionalPanel errors2(1, 2, make_uniform_grid(2));
    gen_panel(cfg, truth, &errors2);
    CHECK(errors.data() == errors2.data());
    CHECK(a == truth.a_matrix);
}

TEST_CASE("break injection is an exact post-break shift") {
    DgpConfig cfg = tiny_config();
    GroundTruth truth;
    FunctionalPanel errors(1, 2, make_uniform_grid(2));
    const FunctionalPanel panel = gen_panel(cfg, truth, &errors);
    REQUIRE(truth.break_set.size() == 2);  // floor(0.25 * 8)
    REQUIRE(truth.delta.size() == truth.break_set.size());

    MatRM diff = panel.data() - errors.data();
    for (std::size_t s = 0; s < truth.break_set.size(); ++s) {
        const int i = truth.break_set[s];
        const int tau = truth.tau[s];
        CHECK(tau >= static_cast<int>(std::ceil(0.25 * cfg.t)));
        CHECK(tau <= static_cast<int>(std::floor(0.75 * cfg.t)));
        for (int t = 0; t < cfg.t; ++t) {
            const Vec row = diff.row(static_cast<Eigen::Index>(i) * cfg.t + t);
            if (t < tau) {
                CHECK(row.isZero(0.0));  // untouched memory, bit-exact
            } else {
                // (e + d) - e rounds once; bound by an ulp of the error value.
                const double tol =
                    1e-12 *
                    (1.0 + errors.curve(i, t).cwiseAbs().maxCoeff() +
                     truth.delta[s].cwiseAbs().maxCoeff());
                CHECK((row - truth.delta[s]).cwiseAbs().maxCoeff() <= tol);
            }
        }
        diff.middleRows(static_cast<Eigen::Index>(i) * cfg.t, cfg.t).setZero();
    }
    CHECK(diff.isZero(0.0));  // no other subject was touched
}

TEST_CASE("grouped design assigns contiguous equal groups") {
    DgpConfig cfg;
    cfg.n = 20;
    cfg.t = 100;
    cfg.grid_size = 21;
    cfg.j_basis = 3;
    cfg.burn_in = 10;
    cfg.sdr = 0.5;
    cfg.snr = 0.2;
    cfg.k0_break_fracs = {0.25, 0.5, 0.75};
    cfg.seed = 54;
    GroundTruth truth;
    gen_panel(cfg, truth);
    CHECK(truth.break_set ==
          std::vector<int>{10, 11, 12, 13, 14, 15, 16, 17, 18, 19});
    CHECK(truth.clusters ==
          std::vector<std::vector<int>>{
              {10, 11, 12}, {13, 14, 15}, {16, 17, 18, 19}});
    CHECK(truth.cluster_b == std::vector<int>{25, 50, 75});
    CHECK(truth.tau ==
          std::vector<int>{25, 25, 25, 50, 50, 50, 75, 75, 75, 75});

    // Full-coverage single group.
    DgpConfig all = cfg;
    all.sdr = 1.0;
    all.k0_break_fracs = {0.5};
    GroundTruth t_all;
    gen_panel(all, t_all);
    CHECK(t_all.break_set.size() == 20);
    CHECK(t_all.clusters.size() == 1);
    CHECK(t_all.cluster_b == std::vector<int>{50});
}

TEST_CASE("error curves have CLT-scale time means") {
    DgpConfig cfg;
    cfg.n = 2;
    cfg.t = 2000;
    cfg.grid_size = 51;
    cfg.j_basis = 21;
    cfg.var_band = -1;
    cfg.burn_in = 0;
    cfg.sdr = 0.0;
    cfg.seed = 55;
    GroundTruth truth;
    const FunctionalPanel panel = gen_panel(cfg, truth);
    const double trace = 21.0 + harmonic_number(21);
    for (int i = 0; i < cfg.n; ++i) {
        Vec mean = Vec::Zero(cfg.grid_size);
        for (int t = 0; t < cfg.t; ++t) mean += panel.curve(i, t).transpose();
        mean /= cfg.t;
        CHECK(std::sqrt(l2_norm_sq(mean, panel.grid())) <
              4.0 * std::sqrt(trace / cfg.t));
    }
}

TEST_CASE("simulation is deterministic in the seed") {
    const DgpConfig cfg = tiny_config();
    GroundTruth t1, t2;
    const FunctionalPanel p1 = gen_panel(cfg, t1);
    const FunctionalPanel p2 = gen_panel(cfg, t2);
    CHECK(p1.data() == p2.data());
    CHECK(t1.break_set == t2.break_set);
    CHECK(t1.tau == t2.tau);
    CHECK(t1.basis_order == t2.basis_order);

    DgpConfig other = cfg;
    other.seed = 78;
    GroundTruth t3;
    const FunctionalPanel p3 = gen_panel(other, t3);
    CHECK(p1.data() != p3.data());
}

TEST_CASE("experiment records are thread-count invariant") {
    DgpConfig cfg = tiny_config();
    RunFlags flags;
    flags.critical_values = true;
    flags.classify = true;
    flags.cluster = true;
    flags.realized_snr = true;
    flags.n_draws = 100;
    flags.bridge_grid = 50;
    flags.k_bar = 3;

    flags.threads = 1;
    const std::vector<RepRecord> serial = run_experiment(cfg, 3, flags);
    flags.threads = 3;
    const std::vector<RepRecord> parallel = run_experiment(cfg, 3, flags);

    REQUIRE(serial.size() == 3);
    for (int rep = 0; rep < 3; ++rep) {
        const RepRecord& a = serial[rep];
        const RepRecord& b = parallel[rep];
        CHECK(a.error.empty());
        CHECK(a.seed == b.seed);
        CHECK(a.z_nt == b.z_nt);
        CHECK(a.z_pe_xi1 == b.z_pe_xi1);
        CHECK(a.z_pe_xi2 == b.z_pe_xi2);
        CHECK(a.lambda1 == b.lambda1);
        CHECK(a.crit == b.crit);
        CHECK(a.k_hat == b.k_hat);
        CHECK(a.cls_xi2.tp_rate == b.cls_xi2.tp_rate);
        // Distinct replications draw distinct panels.
        if (rep > 0) CHECK(a.seed != serial[0].seed);
    }
}

TEST_CASE("experiment stages populate their records") {
    DgpConfig cfg = tiny_config();
    RunFlags flags;
    flags.critical_values = true;
    flags.classify = true;
    flags.cluster = true;
    flags.realized_snr = true;
    flags.n_draws = 150;
    flags.bridge_grid = 50;
    flags.k_bar = 2;
    const std::vector<RepRecord> records = run_experiment(cfg, 2, flags);
    for (const RepRecord& rec : records) {
        REQUIRE(rec.error.empty());
        CHECK(rec.lambda1 > 0.0);
        CHECK(rec.z_nt >= 0.0);
        CHECK(rec.xi1 > rec.xi2);  // ln(NT) dominates ln(max(N,T))
        CHECK(rec.crit.size() == flags.alphas.size());
        for (std::size_t a = 1; a < rec.crit.size(); ++a)
            CHECK(rec.crit[a] <= rec.crit[a - 1]);
        CHECK(rec.cls_xi2.tp_rate >= 0.0);
        CHECK(rec.cls_xi2.tp_rate <= 1.0);
        CHECK(rec.realized_snr > 0.0);
        if (rec.k_hat > 0) CHECK(rec.ic.size() >= 1);
    }

    // share_null reuses replication 0's spec everywhere.
    RunFlags shared = flags;
    shared.share_null_across_reps = true;
    const std::vector<RepRecord> srec = run_experiment(cfg, 2, shared);
    CHECK(srec[0].lambda1 == srec[1].lambda1);
    CHECK(srec[0].crit == srec[1].crit);
}
