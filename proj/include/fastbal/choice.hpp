#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fastbal/errors.hpp"
#include "fastbal/regularization.hpp"

namespace fastbal {

template <class P>
concept PathSource = requires(const P& p, int n) {
    { p.noisy_solution(n) } -> std::convertible_to<const SpectralVector&>;
    { p.rho_at(n) } -> std::convertible_to<double>;
    { p.max_level() } -> std::convertible_to<int>;
};

struct BalancingConfig {
    double tau = 1.0;          // threshold; >= 1 for the Lepskij rule
    int k = 1;                 // lookahead width
    std::optional<int> N;      // Lepskij upper level; grid top when absent
};

inline void validate_balancing(const BalancingConfig& cfg) {
    if (cfg.k < 1) throw std::invalid_argument("lookahead k must be >= 1");
    if (!(cfg.tau >= 0.0)) throw std::invalid_argument("tau must be nonnegative");
}

enum class StopReason { threshold_met, grid_exhausted };

inline std::string to_string(StopReason r) {
    return r == StopReason::threshold_met ? "threshold_met" : "grid_exhausted";
}

struct ChoiceOutcome {
    int chosen_n = 0;
    StopReason stopped = StopReason::threshold_met;
    std::vector<std::pair<int, double>> functional_trace; // (level, statistic) evaluated
    long solves_used = 0;
};

/// b_k(n) = max over m in (n, n+k] of ||x_n^d - x_m^d|| / (4 rho(m)).
template <PathSource P>
double balancing_functional(const P& path, int n, int k) {
    if (k < 1) throw std::invalid_argument("lookahead k must be >= 1");
    if (n < 0 || n + k > path.max_level())
        throw std::out_of_range("balancing functional needs levels up to n+k");
    double b = 0.0;
    for (int m = n + 1; m <= n + k; ++m) {
        const double rho_m = path.rho_at(m);
        if (!(rho_m > 0.0)) throw std::invalid_argument("rho must be positive at level m");
        b = std::max(b, distance(path.noisy_solution(n), path.noisy_solution(m)) / (4.0 * rho_m));
    }
    return b;
}

template <class P>
concept WorkCountingSource = PathSource<P> && requires(const P& p) {
    { p.solves_used() } -> std::convertible_to<long>;
};

/// First level with b_k(n) < tau, scanning upward; touches only levels
/// 0..n+k. Exhausting the grid is a flagged outcome, not an error.
template <WorkCountingSource P>
ChoiceOutcome fast_balancing(const P& path, const BalancingConfig& cfg) {
    validate_balancing(cfg);
    ChoiceOutcome out;
    const int top = path.max_level() - cfg.k;
    for (int n = 0; n <= top; ++n) {
        const double b = balancing_functional(path, n, cfg.k);
        out.functional_trace.emplace_back(n, b);
        if (b < cfg.tau) {
            out.chosen_n = n;
            out.stopped = StopReason::threshold_met;
            out.solves_used = path.solves_used();
            return out;
        }
    }
    out.chosen_n = top;
    out.stopped = StopReason::grid_exhausted;
    out.solves_used = path.solves_used();
    return out;
}

/// Smallest n with b_k(m) < tau for all m in [n, N-k]. Needs the full path
/// up to N; solves_used is N+1 by construction.
inline ChoiceOutcome lepskij_balancing(const RegPath& path, const BalancingConfig& cfg) {
    validate_balancing(cfg);
    if (!(cfg.tau >= 1.0)) throw std::invalid_argument("Lepskij balancing requires tau >= 1");
    const int N = cfg.N.value_or(path.max_level());
    if (N > path.max_level() || N < cfg.k)
        throw std::invalid_argument("Lepskij upper level N out of range");
    ChoiceOutcome out;
    int last_block = -1; // largest m failing the threshold
    for (int m = 0; m <= N - cfg.k; ++m) {
        const double b = balancing_functional(path, m, cfg.k);
        out.functional_trace.emplace_back(m, b);
        if (b >= cfg.tau) last_block = m;
    }
    out.chosen_n = last_block + 1;
    out.stopped = last_block + 1 <= N - cfg.k ? StopReason::threshold_met
                                              : StopReason::grid_exhausted;
    out.solves_used = N + 1;
    return out;
}

/// Morozov discrepancy baseline: first level with ||A x_n^d - y^d|| <=
/// tau_m * delta.
template <PathSource P>
ChoiceOutcome morozov_discrepancy(const SpectralOperator& op, const SpectralVector& y_noisy,
                                  const P& path, double tau_m, double delta) {
    if (!(tau_m >= 1.0)) throw std::invalid_argument("Morozov tau_m must be >= 1");
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    if (y_noisy.size() != op.dim()) throw shape_error("data length does not match operator");
    ChoiceOutcome out;
    for (int n = 0; n <= path.max_level(); ++n) {
        const auto& xn = path.noisy_solution(n);
        long double acc = 0.0L;
        for (std::size_t j = 0; j < op.dim(); ++j) {
            const long double r =
                static_cast<long double>(op.sigma[j]) * xn.coeffs[j] - y_noisy.coeffs[j];
            acc += r * r;
        }
        const double disc = static_cast<double>(std::sqrt(acc));
        out.functional_trace.emplace_back(n, disc / delta);
        if (disc <= tau_m * delta) {
            out.chosen_n = n;
            out.stopped = StopReason::threshold_met;
            out.solves_used = n + 1;
            return out;
        }
    }
    out.chosen_n = path.max_level();
    out.stopped = StopReason::grid_exhausted;
    out.solves_used = path.max_level() + 1;
    return out;
}

// ---------------------------------------------------------------------------
// Oracles (ground truth required)

inline std::vector<double> noisy_error_curve(const RegPath& path, const SpectralVector& x_true) {
    std::vector<double> err(path.solutions_noisy.size());
    for (std::size_t n = 0; n < err.size(); ++n)
        err[n] = distance(path.solutions_noisy[n], x_true);
    return err;
}

struct OracleParameters {
    int n_o = 0;               // argmin ||x_n^d - x||, smallest on ties
    int n_oo = 0;              // argmin ||x_n - x|| + rho(n)
    std::optional<int> n_opt;  // first crossing err > rho, err(n+1) <= rho(n+1)
};

inline OracleParameters oracle_parameters(const RegPath& path, const SpectralVector& x_true) {
    OracleParameters o;
    const auto err_noisy = noisy_error_curve(path, x_true);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < err_noisy.size(); ++n) {
        if (err_noisy[n] < best) {
            best = err_noisy[n];
            o.n_o = static_cast<int>(n);
        }
    }
    double best_sum = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < path.err_clean.size(); ++n) {
        const double s = path.err_clean[n] + path.rho[n];
        if (s < best_sum) {
            best_sum = s;
            o.n_oo = static_cast<int>(n);
        }
    }
    for (std::size_t n = 0; n + 1 < path.err_clean.size(); ++n) {
        if (path.err_clean[n] > path.rho[n] && path.err_clean[n + 1] <= path.rho[n + 1]) {
            o.n_opt = static_cast<int>(n);
            break;
        }
    }
    return o;
}

/// Constant of the deterministic oracle inequality:
/// C = (4 tau + 3)/2 * min over kappa = 1..k of w2^kappa / (1 - w1^kappa).
inline double oracle_constant_C(double tau, int k, double w1, double w2) {
    if (!(w1 > 0.0 && w1 < 1.0)) throw std::invalid_argument("w1 must lie in (0,1)");
    if (!(w2 > 1.0)) throw std::invalid_argument("w2 must exceed 1");
    if (!(tau >= 1.0)) throw std::invalid_argument("tau must be >= 1");
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    double best = std::numeric_limits<double>::infinity();
    for (int kappa = 1; kappa <= k; ++kappa)
        best = std::min(best, std::pow(w2, kappa) / (1.0 - std::pow(w1, kappa)));
    return 0.5 * (4.0 * tau + 3.0) * best;
}

struct EfficiencyRatios {
    std::optional<double> vs_oo; // error / (||x_{n_opt} - x|| + rho(n_opt)); absent with n_opt
    double vs_best = 0.0;        // error / min_n ||x_n^d - x||
};

inline EfficiencyRatios efficiency_ratio(const RegPath& path, const SpectralVector& x_true,
                                         int chosen_n) {
    const auto err_noisy = noisy_error_curve(path, x_true);
    const double chosen_err = err_noisy.at(static_cast<std::size_t>(chosen_n));
    EfficiencyRatios r;
    r.vs_best = chosen_err / *std::min_element(err_noisy.begin(), err_noisy.end());
    const auto o = oracle_parameters(path, x_true);
    if (o.n_opt) {
        const auto i = static_cast<std::size_t>(*o.n_opt);
        r.vs_oo = chosen_err / (path.err_clean[i] + path.rho[i]);
    }
    return r;
}

} // namespace fastbal
