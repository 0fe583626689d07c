// Minimal end-to-end use of the library: build a problem, add noise, run
// the three parameter choice rules, and compare against the oracles.

#include <cstdio>

#include "fastbal/fastbal.hpp"

using namespace fastbal;

int main() {
    // Severely ill-posed synthetic problem in SVD coordinates.
    auto op = make_operator(GeometricDecay{0.7}, 400, 1.0);
    auto x = make_solution(op, PowerSmoothness{0.25}, /*seed=*/7);
    const auto inst = make_instance(std::move(op), std::move(x), "demo");

    const RegGrid grid = default_grid(inst.op);
    const double delta = 1e-2 * inst.y_exact.norm();

    // White noise and the matching noise behavior rho.
    const auto noise = sample_white(inst.op.dim(), delta, /*seed=*/42);
    SpectralVector y_noisy = inst.y_exact;
    for (std::size_t k = 0; k < y_noisy.size(); ++k) y_noisy.coeffs[k] += noise.xi.coeffs[k];
    std::vector<double> std_k(inst.op.dim(), delta);
    const auto rho = rho_stochastic_curve(inst.op, grid, FilterKind::tikhonov, std_k);

    // Fast balancing touches only the levels it needs.
    LazyPath lazy(inst.op, y_noisy, grid, FilterKind::tikhonov, rho);
    const auto fast = fast_balancing(lazy, BalancingConfig{});
    std::printf("fast balancing: n=%d with %ld solves\n", fast.chosen_n, fast.solves_used);

    // Lepskij and the oracles need the whole path.
    const auto path = build_path(inst, y_noisy, grid, FilterKind::tikhonov, rho);
    const auto lep = lepskij_balancing(path, BalancingConfig{});
    const auto mor = morozov_discrepancy(inst.op, y_noisy, path, 1.0,
                                         noise_norm_level(noise.spec, inst.op.dim()));
    const auto oracle = oracle_parameters(path, inst.x_true);
    std::printf("lepskij: n=%d (%ld solves), morozov: n=%d (%ld solves)\n", lep.chosen_n,
                lep.solves_used, mor.chosen_n, mor.solves_used);
    std::printf("oracles: n_o=%d n_oo=%d n_opt=%s\n", oracle.n_o, oracle.n_oo,
                oracle.n_opt ? std::to_string(*oracle.n_opt).c_str() : "absent");

    const auto eff = efficiency_ratio(path, inst.x_true, fast.chosen_n);
    std::printf("fast efficiency: vs_best=%.3f vs_oo=%s\n", eff.vs_best,
                eff.vs_oo ? format_double(*eff.vs_oo).c_str() : "absent");
    return 0;
}
