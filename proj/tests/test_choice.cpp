#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fastbal/fastbal.hpp"

using namespace fastbal;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Level source with hand-placed one-dimensional solutions, for driving the
// rules through prescribed functional values.
struct FakeSource {
    std::vector<SpectralVector> sols;
    std::vector<double> rho;
    mutable std::vector<bool> seen;
    mutable long solves = 0;

    explicit FakeSource(std::vector<double> coords, std::vector<double> rho_in)
        : rho(std::move(rho_in)), seen(coords.size(), false) {
        for (double c : coords) sols.push_back(SpectralVector{{c}});
    }
    const SpectralVector& noisy_solution(int n) const {
        if (!seen[static_cast<std::size_t>(n)]) {
            seen[static_cast<std::size_t>(n)] = true;
            ++solves;
        }
        return sols[static_cast<std::size_t>(n)];
    }
    double rho_at(int n) const { return rho[static_cast<std::size_t>(n)]; }
    int max_level() const { return static_cast<int>(sols.size()) - 1; }
    long solves_used() const { return solves; }
};

// Synthetic full path with prescribed clean-error and rho curves.
RegPath fake_path(std::vector<double> noisy_coords, std::vector<double> err_clean,
                  std::vector<double> rho) {
    RegPath p;
    p.grid = RegGrid{1.0, 0.5, static_cast<int>(noisy_coords.size()) - 1};
    for (double c : noisy_coords) p.solutions_noisy.push_back(SpectralVector{{c}});
    p.err_clean = std::move(err_clean);
    p.rho = std::move(rho);
    return p;
}

struct Trial {
    ProblemInstance inst;
    RegGrid grid;
    std::vector<double> rho;
    SpectralVector y_noisy;
    RegPath path;
};

Trial make_white_trial(const DecaySpec& decay, double nu, double delta_rel,
                       std::uint64_t seed) {
    Trial t;
    auto op = make_operator(decay, 200, 1.0);
    t.inst = make_instance(op, make_solution(op, PowerSmoothness{nu}, seed), "trial");
    t.grid = default_grid(t.inst.op);
    const double delta = delta_rel * t.inst.y_exact.norm();
    t.rho = rho_stochastic_curve(t.inst.op, t.grid, FilterKind::tikhonov,
                                 std::vector<double>(t.inst.op.dim(), delta));
    const auto xi = sample_white(t.inst.op.dim(), delta, seed + 1);
    t.y_noisy = t.inst.y_exact;
    for (std::size_t k = 0; k < t.y_noisy.size(); ++k)
        t.y_noisy.coeffs[k] += xi.xi.coeffs[k];
    t.path = build_path(t.inst, t.y_noisy, t.grid, FilterKind::tikhonov, t.rho);
    return t;
}

} // namespace

TEST_CASE("balancing functional") {
    SECTION("identical adjacent solutions give zero") {
        FakeSource src({1.0, 1.0, 1.0}, {1.0, 1.0, 1.0});
        CHECK(balancing_functional(src, 0, 1) == 0.0);
    }
    SECTION("||diff|| = 2 with rho = 1 gives 1/2") {
        FakeSource src({0.0, 2.0, 2.0}, {1.0, 1.0, 1.0});
        CHECK(balancing_functional(src, 0, 1) == 0.5);
    }
    SECTION("k = 2 takes the max over the window") {
        FakeSource src({0.0, 2.0, 3.6}, {1.0, 1.0, 1.0});
        CHECK_THAT(balancing_functional(src, 0, 2), WithinRel(0.9, 1e-15));
    }
    SECTION("window past the grid is an index error") {
        FakeSource src({0.0, 1.0}, {1.0, 1.0});
        CHECK_THROWS_AS(balancing_functional(src, 1, 1), std::out_of_range);
    }
    SECTION("nonpositive rho is rejected") {
        FakeSource src({0.0, 1.0}, {1.0, 0.0});
        CHECK_THROWS_AS(balancing_functional(src, 0, 1), std::invalid_argument);
    }
}

TEST_CASE("fast balancing stops at the first level below tau") {
    // b values 5, 2, 0.8, 0.3 with rho = 1/4 everywhere.
    FakeSource src({0.0, 5.0, 7.0, 7.8, 8.1, 8.1, 8.1},
                   std::vector<double>(7, 0.25));
    const auto out = fast_balancing(src, BalancingConfig{1.0, 1, {}});
    CHECK(out.chosen_n == 2);
    CHECK(out.stopped == StopReason::threshold_met);
    CHECK(out.solves_used == 4); // levels 0..3
    REQUIRE(out.functional_trace.size() == 3);
    CHECK_THAT(out.functional_trace[0].second, WithinRel(5.0, 1e-15));
    CHECK_THAT(out.functional_trace[1].second, WithinRel(2.0, 1e-15));
    CHECK_THAT(out.functional_trace[2].second, WithinRel(0.8, 1e-15));
}

TEST_CASE("fast balancing flags grid exhaustion instead of throwing") {
    // Strictly growing coordinates keep b at 4 >= tau everywhere.
    std::vector<double> coords;
    for (int n = 0; n < 6; ++n) coords.push_back(4.0 * n);
    FakeSource src(coords, std::vector<double>(6, 1.0));
    const auto out = fast_balancing(src, BalancingConfig{1.0, 1, {}});
    CHECK(out.chosen_n == 4); // n_max - k
    CHECK(out.stopped == StopReason::grid_exhausted);
    CHECK(out.solves_used == 6);
}

TEST_CASE("lepskij balancing scans up to the cap") {
    // b over m = 0..2 is 0.5, 2, 0.5: level 1 blocks everything below it.
    auto path = fake_path({0.0, 2.0, 10.0, 12.0}, {1, 1, 1, 1}, {1, 1, 1, 1});
    const auto out = lepskij_balancing(path, BalancingConfig{1.0, 1, 3});
    CHECK(out.chosen_n == 2);
    CHECK(out.solves_used == 4); // N + 1
    CHECK(out.stopped == StopReason::threshold_met);

    // All b below tau: the smallest admissible level is 0.
    auto calm = fake_path({0.0, 0.5, 1.0, 1.5}, {1, 1, 1, 1}, {1, 1, 1, 1});
    CHECK(lepskij_balancing(calm, BalancingConfig{1.0, 1, 3}).chosen_n == 0);

    // Same data: fast picks 0, so min{N, n_*} = 0 <= n_L.
    FakeSource fast_src({0.0, 2.0, 10.0, 12.0}, {1, 1, 1, 1});
    const auto fast = fast_balancing(fast_src, BalancingConfig{1.0, 1, {}});
    CHECK(fast.chosen_n == 0);
    CHECK(out.chosen_n >= std::min(3, fast.chosen_n));
}

TEST_CASE("lepskij validates tau and N") {
    auto path = fake_path({0.0, 1.0, 2.0}, {1, 1, 1}, {1, 1, 1});
    CHECK_THROWS_AS(lepskij_balancing(path, BalancingConfig{0.5, 1, 2}),
                    std::invalid_argument);
    CHECK_THROWS_AS(lepskij_balancing(path, BalancingConfig{1.0, 1, 5}),
                    std::invalid_argument);
}

TEST_CASE("morozov discrepancy rule") {
    SpectralOperator op;
    op.sigma = {1.0, 0.5};
    const RegGrid grid{1.0, 0.5, 10};

    SECTION("zero data has zero discrepancy at level 0") {
        SpectralVector y{{0.0, 0.0}};
        const LazyPath path(op, y, grid, FilterKind::tikhonov,
                            std::vector<double>(11, 1.0));
        const auto out = morozov_discrepancy(op, y, path, 1.0, 0.1);
        CHECK(out.chosen_n == 0);
        CHECK(out.solves_used == 1);
    }

    SECTION("chooses the first level whose residual falls below tau_m delta") {
        SpectralVector y{{1.0, 0.8}};
        const LazyPath path(op, y, grid, FilterKind::tikhonov,
                            std::vector<double>(11, 1.0));
        const double delta = 0.3;
        const auto out = morozov_discrepancy(op, y, path, 1.0, delta);
        // Oracle: recompute the discrepancy curve directly.
        int expected = -1;
        for (int n = 0; n <= 10 && expected < 0; ++n) {
            const double a = alpha_at(grid, n);
            double d2 = 0.0;
            for (std::size_t k = 0; k < 2; ++k) {
                const double res = a / (op.sigma[k] * op.sigma[k] + a) * y.coeffs[k];
                d2 += res * res;
            }
            if (std::sqrt(d2) <= delta) expected = n;
        }
        REQUIRE(expected >= 0);
        CHECK(out.chosen_n == expected);
        CHECK(out.solves_used == expected + 1);
    }

    SECTION("exhausts the grid when delta is too small") {
        SpectralVector y{{1.0, 0.8}};
        const LazyPath path(op, y, grid, FilterKind::tikhonov,
                            std::vector<double>(11, 1.0));
        const auto out = morozov_discrepancy(op, y, path, 1.0, 1e-9);
        CHECK(out.chosen_n == 10);
        CHECK(out.stopped == StopReason::grid_exhausted);
    }

    SECTION("tau_m below 1 is rejected") {
        SpectralVector y{{1.0, 0.8}};
        const LazyPath path(op, y, grid, FilterKind::tikhonov,
                            std::vector<double>(11, 1.0));
        CHECK_THROWS_AS(morozov_discrepancy(op, y, path, 0.9, 0.1), std::invalid_argument);
    }
}

TEST_CASE("oracle parameters on a prescribed path") {
    auto path = fake_path({4.0, 2.0, 1.0, 0.5}, {4.0, 2.0, 1.0, 0.5},
                          {0.3, 0.6, 1.2, 2.4});
    const SpectralVector x{{0.0}};
    const auto o = oracle_parameters(path, x);
    CHECK(o.n_o == 3);  // noisy errors equal the coordinates here
    CHECK(o.n_oo == 2); // sums are 4.3, 2.6, 2.2, 2.9
    REQUIRE(o.n_opt.has_value());
    CHECK(*o.n_opt == 1); // 2 > 0.6 and 1 <= 1.2

    // Noise dominating everywhere: no crossing, flagged absent.
    auto flooded = fake_path({4.0, 2.0, 1.0}, {4.0, 2.0, 1.0}, {40.0, 40.0, 40.0});
    CHECK_FALSE(oracle_parameters(flooded, x).n_opt.has_value());

    // Ties break toward the smaller index.
    auto tie = fake_path({2.0, 1.0, 1.0}, {2.0, 1.0, 1.0}, {0.1, 0.1, 0.1});
    CHECK(oracle_parameters(tie, x).n_o == 1);
}

TEST_CASE("oracle constant C") {
    CHECK_THAT(oracle_constant_C(1.0, 1, 0.5, 2.0), WithinRel(14.0, 1e-15));
    CHECK_THAT(oracle_constant_C(1.0, 2, 0.5, 1.1), WithinAbs(5.647, 1e-3));
    CHECK_THROWS_AS(oracle_constant_C(1.0, 1, 1.0, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(oracle_constant_C(1.0, 1, 0.5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(oracle_constant_C(0.5, 1, 0.5, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(oracle_constant_C(1.0, 0, 0.5, 2.0), std::invalid_argument);
}

TEST_CASE("efficiency ratios") {
    auto path = fake_path({2.0, 0.9, 1.5}, {0.7, 0.2, 0.1}, {0.3, 0.5, 0.9});
    const SpectralVector x{{0.0}};
    // n_opt = 0 (0.7 > 0.3, 0.2 <= 0.5), denominator 0.7 + 0.3 = 1.
    const auto eff = efficiency_ratio(path, x, 0);
    REQUIRE(eff.vs_oo.has_value());
    CHECK_THAT(*eff.vs_oo, WithinRel(2.0, 1e-15));
    CHECK_THAT(eff.vs_best, WithinRel(2.0 / 0.9, 1e-15));

    // Choosing the best level gives vs_best = 1.
    CHECK(efficiency_ratio(path, x, 1).vs_best == 1.0);

    // Absent n_opt: vs_oo absent, vs_best still present.
    auto flooded = fake_path({2.0, 0.9}, {0.7, 0.2}, {30.0, 40.0});
    const auto eff2 = efficiency_ratio(flooded, x, 0);
    CHECK_FALSE(eff2.vs_oo.has_value());
    CHECK(eff2.vs_best > 0.0);
}

TEST_CASE("ordering lemma holds on real trials") {
    for (const auto& decay : {DecaySpec{GeometricDecay{0.7}}, DecaySpec{PolynomialDecay{1.0}}}) {
        for (double delta_rel : {1e-1, 1e-3}) {
            for (std::uint64_t seed : {10ULL, 20ULL, 30ULL}) {
                const auto t = make_white_trial(decay, 0.3, delta_rel, seed);
                for (double tau : {1.0, 1.5, 2.0}) {
                    for (int N : {t.grid.n_max / 2, t.grid.n_max}) {
                        LazyPath lazy(t.inst.op, t.y_noisy, t.grid, FilterKind::tikhonov,
                                      t.rho);
                        const auto fast = fast_balancing(lazy, BalancingConfig{tau, 1, {}});
                        const auto lep =
                            lepskij_balancing(t.path, BalancingConfig{tau, 1, N});
                        CHECK(lep.chosen_n >= std::min(N, fast.chosen_n));
                    }
                }
            }
        }
    }
}

TEST_CASE("fast balancing work never exceeds Lepskij work at the same cap") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL}) {
        const auto t = make_white_trial(GeometricDecay{0.7}, 0.25, 1e-2, seed);
        LazyPath lazy(t.inst.op, t.y_noisy, t.grid, FilterKind::tikhonov, t.rho);
        const BalancingConfig cfg{1.0, 1, {}};
        const auto fast = fast_balancing(lazy, cfg);
        const auto lep = lepskij_balancing(t.path, cfg);
        CHECK(fast.solves_used <= lep.solves_used);
        if (fast.chosen_n + cfg.k < t.grid.n_max) CHECK(fast.solves_used < lep.solves_used);
        // Work accounting: levels 0..chosen+k were materialized.
        if (fast.stopped == StopReason::threshold_met)
            CHECK(fast.solves_used == fast.chosen_n + cfg.k + 1);
    }
}

TEST_CASE("choices are scale equivariant") {
    const auto t = make_white_trial(GeometricDecay{0.7}, 0.25, 1e-2, 99);
    const double c = 37.5;
    Trial scaled = t;
    for (auto& v : scaled.y_noisy.coeffs) v *= c;
    for (auto& v : scaled.rho) v *= c;
    for (auto& v : scaled.inst.x_true.coeffs) v *= c;
    for (auto& v : scaled.inst.y_exact.coeffs) v *= c;
    scaled.path = build_path(scaled.inst, scaled.y_noisy, scaled.grid, FilterKind::tikhonov,
                             scaled.rho);

    LazyPath lazy_a(t.inst.op, t.y_noisy, t.grid, FilterKind::tikhonov, t.rho);
    LazyPath lazy_b(scaled.inst.op, scaled.y_noisy, scaled.grid, FilterKind::tikhonov,
                    scaled.rho);
    const BalancingConfig cfg{1.0, 1, {}};
    CHECK(fast_balancing(lazy_a, cfg).chosen_n == fast_balancing(lazy_b, cfg).chosen_n);
    CHECK(lepskij_balancing(t.path, cfg).chosen_n ==
          lepskij_balancing(scaled.path, cfg).chosen_n);

    const double delta = 1e-2 * t.inst.y_exact.norm() * std::sqrt(double(t.inst.op.dim()));
    const auto ma = morozov_discrepancy(t.inst.op, t.y_noisy, t.path, 1.0, delta);
    const auto mb =
        morozov_discrepancy(scaled.inst.op, scaled.y_noisy, scaled.path, 1.0, c * delta);
    CHECK(ma.chosen_n == mb.chosen_n);

    const auto oa = oracle_parameters(t.path, t.inst.x_true);
    const auto ob = oracle_parameters(scaled.path, scaled.inst.x_true);
    CHECK(oa.n_o == ob.n_o);
    CHECK(oa.n_oo == ob.n_oo);
    CHECK(oa.n_opt == ob.n_opt);
}

TEST_CASE("two-point oracle comparison on q = 1/2 grids") {
    // 2 (err + rho)(n_oo) >= (err + rho)(n_opt) whenever n_opt exists.
    for (const auto& decay :
         {DecaySpec{GeometricDecay{0.7}}, DecaySpec{PolynomialDecay{2.0}}}) {
        for (double delta_rel : {1e-1, 1e-2, 1e-3}) {
            const auto t = make_white_trial(decay, 0.3, delta_rel, 5);
            const auto o = oracle_parameters(t.path, t.inst.x_true);
            if (!o.n_opt) continue;
            const auto ioo = static_cast<std::size_t>(o.n_oo);
            const auto iopt = static_cast<std::size_t>(*o.n_opt);
            CHECK(2.0 * (t.path.err_clean[ioo] + t.path.rho[ioo]) >=
                  t.path.err_clean[iopt] + t.path.rho[iopt]);
        }
    }
}

TEST_CASE("deterministic oracle inequality with measured constants") {
    for (std::uint64_t seed : {11ULL, 12ULL}) {
        auto op = make_operator(GeometricDecay{0.7}, 200, 1.0);
        const auto inst =
            make_instance(op, make_solution(op, PowerSmoothness{0.25}, seed), "det");
        const auto grid = default_grid(inst.op);
        const double delta = 1e-2 * inst.y_exact.norm();
        const auto rho = rho_deterministic_curve(inst.op, grid, FilterKind::tikhonov, delta);
        const auto xi =
            deterministic_worst_case(inst.op, grid, delta, SphereRandom{}, seed + 100);
        SpectralVector y = inst.y_exact;
        for (std::size_t k = 0; k < y.size(); ++k) y.coeffs[k] += xi.xi.coeffs[k];
        const auto path = build_path(inst, y, grid, FilterKind::tikhonov, rho);
        const auto o = oracle_parameters(path, inst.x_true);
        REQUIRE(o.n_opt.has_value());
        const int cut = presaturation_cut(path.err_clean, inst.x_true.norm());
        const auto c = estimate_regularity_constants(path.err_clean, path.rho, cut);
        const double C = oracle_constant_C(1.0, 1, c.w1, c.w2);
        LazyPath lazy(inst.op, y, grid, FilterKind::tikhonov, rho);
        const auto fast = fast_balancing(lazy, BalancingConfig{1.0, 1, {}});
        const double lhs = distance(path.noisy_solution(fast.chosen_n), inst.x_true);
        const auto iopt = static_cast<std::size_t>(*o.n_opt);
        CHECK(lhs <= C * (path.err_clean[iopt] + path.rho[iopt]));
    }
}
