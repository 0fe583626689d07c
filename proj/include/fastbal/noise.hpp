#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fastbal/errors.hpp"
#include "fastbal/regularization.hpp"
#include "fastbal/rng.hpp"
#include "fastbal/spectral.hpp"

namespace fastbal {

/// How an adversarial (deterministic) realization of norm delta is placed.
struct SphereRandom {};                 // uniform direction on the delta-sphere
struct AlignedWorst { int n_ref = 0; }; // all mass on the worst mode at level n_ref
struct FlatDirection {};                // equal magnitude on every mode
using DeterministicPolicy = std::variant<SphereRandom, AlignedWorst, FlatDirection>;

struct DeterministicNoise {
    double delta = 0.0; // ||xi|| <= delta, equality for the worst-case policies
    DeterministicPolicy policy = SphereRandom{};
};

struct WhiteNoise {
    double delta = 0.0; // per-mode N(0, delta^2), iid
};

struct ColoredNoise {
    std::vector<double> mode_std; // per-mode N(0, mode_std_k^2), independent
};

struct NoiseSpec {
    std::variant<DeterministicNoise, WhiteNoise, ColoredNoise> model;
    std::uint64_t seed = 0;
};

struct NoiseRealization {
    SpectralVector xi; // v-basis
    NoiseSpec spec;
};

inline bool is_stochastic(const NoiseSpec& spec) {
    return !std::holds_alternative<DeterministicNoise>(spec.model);
}

inline void validate_mode_std(std::span<const double> mode_std) {
    bool any = false;
    for (double s : mode_std) {
        if (!(s >= 0.0)) throw std::invalid_argument("mode_std entries must be nonnegative");
        any = any || s > 0.0;
    }
    if (!any) throw std::invalid_argument("mode_std must not be all zero");
}

inline NoiseRealization sample_colored(std::span<const double> mode_std, std::uint64_t seed) {
    validate_mode_std(mode_std);
    NoiseRealization r;
    r.spec.model = ColoredNoise{{mode_std.begin(), mode_std.end()}};
    r.spec.seed = seed;
    r.xi.coeffs.resize(mode_std.size());
    Rng rng(seed);
    for (std::size_t k = 0; k < mode_std.size(); ++k)
        r.xi.coeffs[k] = mode_std[k] * rng.next_gaussian();
    return r;
}

/// White noise is colored noise with constant std; the two produce
/// bit-identical draws for the same seed.
inline NoiseRealization sample_white(std::size_t K, double delta, std::uint64_t seed) {
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    std::vector<double> std_k(K, delta);
    auto r = sample_colored(std_k, seed);
    r.spec.model = WhiteNoise{delta};
    return r;
}

/// Realization with ||xi|| = delta exactly, placed per policy. `aligned`
/// stresses the level that amplifies noise the most; `flat` is seedless and
/// reproducible; `sphere_random` is the Monte Carlo default.
inline NoiseRealization deterministic_worst_case(const SpectralOperator& op, const RegGrid& grid,
                                                 double delta, const DeterministicPolicy& policy,
                                                 std::uint64_t seed = 0) {
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    const std::size_t K = op.dim();
    NoiseRealization r;
    r.spec.model = DeterministicNoise{delta, policy};
    r.spec.seed = seed;
    r.xi.coeffs.assign(K, 0.0);
    if (std::holds_alternative<SphereRandom>(policy)) {
        Rng rng(seed);
        double norm = 0.0;
        while (norm == 0.0) { // zero draw has probability ~0 but guard anyway
            for (auto& c : r.xi.coeffs) c = rng.next_gaussian();
            norm = r.xi.norm();
        }
        for (auto& c : r.xi.coeffs) c *= delta / norm;
    } else if (const auto* a = std::get_if<AlignedWorst>(&policy)) {
        const double alpha = alpha_at(grid, a->n_ref);
        std::size_t worst = 0;
        double best = -1.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double f = filter_factor(FilterKind::tikhonov, op.sigma[k], alpha);
            if (f > best) {
                best = f;
                worst = k;
            }
        }
        r.xi.coeffs[worst] = delta;
    } else {
        const double c = delta / std::sqrt(static_cast<double>(K));
        r.xi.coeffs.assign(K, c);
    }
    return r;
}

inline NoiseRealization sample_noise(const SpectralOperator& op, const RegGrid& grid,
                                     const NoiseSpec& spec) {
    if (const auto* d = std::get_if<DeterministicNoise>(&spec.model))
        return deterministic_worst_case(op, grid, d->delta, d->policy, spec.seed);
    if (const auto* w = std::get_if<WhiteNoise>(&spec.model))
        return sample_white(op.dim(), w->delta, spec.seed);
    return sample_colored(std::get<ColoredNoise>(spec.model).mode_std, spec.seed);
}

/// rho curve matching the noise model: worst-case bound for deterministic
/// noise, RMS for stochastic noise.
inline std::vector<double> rho_curve_for(const SpectralOperator& op, const RegGrid& grid,
                                         FilterKind kind, const NoiseSpec& spec) {
    if (const auto* d = std::get_if<DeterministicNoise>(&spec.model))
        return rho_deterministic_curve(op, grid, kind, d->delta);
    if (const auto* w = std::get_if<WhiteNoise>(&spec.model)) {
        std::vector<double> std_k(op.dim(), w->delta);
        return rho_stochastic_curve(op, grid, kind, std_k);
    }
    return rho_stochastic_curve(op, grid, kind, std::get<ColoredNoise>(spec.model).mode_std);
}

/// Noise level in the data norm, which is what a discrepancy rule compares
/// against: ||xi|| <= delta for deterministic noise, and the RMS norm
/// sqrt(E||xi||^2) = sqrt(sum std^2) for stochastic noise.
inline double noise_norm_level(const NoiseSpec& spec, std::size_t K) {
    if (const auto* d = std::get_if<DeterministicNoise>(&spec.model)) return d->delta;
    if (const auto* w = std::get_if<WhiteNoise>(&spec.model))
        return w->delta * std::sqrt(static_cast<double>(K));
    const auto& std_k = std::get<ColoredNoise>(spec.model).mode_std;
    long double acc = 0.0L;
    for (double s : std_k) acc += static_cast<long double>(s) * s;
    return static_cast<double>(std::sqrt(acc));
}

// ---------------------------------------------------------------------------
// rho from replicated measurements

struct RhoEstimate {
    std::vector<double> rho;   // per level
    std::size_t replicates = 0;
    bool low_confidence = false; // true when replicates == 2
};

/// Estimate the per-mode noise std from repeated measurements of the same
/// right-hand side, then propagate through the filter. Unbiased variance
/// with divisor M-1.
inline RhoEstimate estimate_rho_from_replicates(std::span<const SpectralVector> replicates,
                                                const SpectralOperator& op, const RegGrid& grid,
                                                FilterKind kind) {
    const std::size_t M = replicates.size();
    if (M < 2) throw insufficient_data_error("need at least 2 replicates to estimate rho");
    const std::size_t K = op.dim();
    for (const auto& r : replicates)
        if (r.size() != K) throw shape_error("replicate length does not match operator");

    std::vector<double> std_k(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        long double m = 0.0L;
        for (const auto& r : replicates) m += r.coeffs[k];
        m /= static_cast<long double>(M);
        long double acc = 0.0L;
        for (const auto& r : replicates) {
            const long double d = r.coeffs[k] - m;
            acc += d * d;
        }
        std_k[k] = static_cast<double>(std::sqrt(acc / static_cast<long double>(M - 1)));
    }
    RhoEstimate est;
    est.replicates = M;
    est.low_confidence = M == 2;
    est.rho = rho_stochastic_curve(op, grid, kind, std_k);
    return est;
}

} // namespace fastbal
