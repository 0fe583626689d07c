#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fastbal/errors.hpp"
#include "fastbal/numeric.hpp"
#include "fastbal/spectral.hpp"

namespace fastbal {

/// Geometric grid of regularization strengths alpha_n = q0 * q^n for
/// n = 0..n_max. Larger n means weaker regularization.
struct RegGrid {
    double q0 = 1.0;
    double q = 0.5;
    int n_max = 60;
};

inline void validate_grid(const RegGrid& g) {
    if (!(g.q0 > 0.0)) throw std::invalid_argument("grid q0 must be positive");
    if (!(g.q > 0.0 && g.q < 1.0)) throw std::invalid_argument("grid q must lie in (0,1)");
    if (g.n_max < 2) throw std::invalid_argument("grid n_max must be >= 2");
}

inline double alpha_at(const RegGrid& g, int n) {
    if (n < 0 || n > g.n_max)
        throw std::out_of_range("grid level " + std::to_string(n) + " out of range");
    return g.q0 * std::pow(g.q, n);
}

/// Defaults used throughout: alpha_0 = sigma_1^2 starts at the top of the
/// spectrum, q = 1/2, n_max = 60.
inline RegGrid default_grid(const SpectralOperator& op, double q = 0.5, int n_max = 60) {
    return RegGrid{op.sigma.front() * op.sigma.front(), q, n_max};
}

enum class FilterKind {
    tikhonov,        // sigma/(sigma^2 + alpha); the analyzed method
    spectral_cutoff, // 1/sigma above the cut, 0 below; experimental only
};

inline std::string to_string(FilterKind k) {
    return k == FilterKind::tikhonov ? "tikhonov" : "spectral_cutoff";
}

inline FilterKind filter_kind_from_string(const std::string& s) {
    if (s == "tikhonov") return FilterKind::tikhonov;
    if (s == "spectral_cutoff") return FilterKind::spectral_cutoff;
    throw std::invalid_argument("unknown filter kind: " + s);
}

inline double filter_factor(FilterKind kind, double sigma, double alpha) {
    if (!(sigma > 0.0)) throw std::invalid_argument("filter_factor: sigma must be positive");
    if (!(alpha > 0.0)) throw std::invalid_argument("filter_factor: alpha must be positive");
    if (kind == FilterKind::tikhonov) return sigma / (sigma * sigma + alpha);
    return sigma * sigma >= alpha ? 1.0 / sigma : 0.0;
}

/// Apply the level-n filter to data coefficients. Feeding y_exact yields
/// the noise-free x_n, feeding noisy data yields x_n^delta.
inline SpectralVector regularized_solution(const SpectralOperator& op, const SpectralVector& y,
                                           const RegGrid& grid, FilterKind kind, int n) {
    if (y.size() != op.dim()) throw shape_error("data length does not match operator");
    const double alpha = alpha_at(grid, n);
    SpectralVector x;
    x.coeffs.resize(op.dim());
    for (std::size_t k = 0; k < op.dim(); ++k)
        x.coeffs[k] = filter_factor(kind, op.sigma[k], alpha) * y.coeffs[k];
    return x;
}

/// ||x - x_n|| for every level. For Tikhonov the residual per mode is
/// x_k * alpha/(sigma_k^2 + alpha), monotone in alpha, so the curve is
/// nonincreasing in n.
inline std::vector<double> noise_free_error_curve(const ProblemInstance& inst,
                                                  const RegGrid& grid, FilterKind kind) {
    validate_grid(grid);
    std::vector<double> err(static_cast<std::size_t>(grid.n_max) + 1);
    for (int n = 0; n <= grid.n_max; ++n) {
        const double alpha = alpha_at(grid, n);
        long double acc = 0.0L;
        for (std::size_t k = 0; k < inst.op.dim(); ++k) {
            const double s = inst.op.sigma[k];
            const double r = inst.x_true.coeffs[k] *
                             (1.0 - filter_factor(kind, s, alpha) * s);
            acc += static_cast<long double>(r) * r;
        }
        err[static_cast<std::size_t>(n)] = static_cast<double>(std::sqrt(acc));
    }
    return err;
}

/// Worst-case propagated noise at level n under ||xi|| <= delta:
/// delta * max_k filter. For Tikhonov this never exceeds delta/(2 sqrt(alpha)).
inline double rho_deterministic(const SpectralOperator& op, const RegGrid& grid,
                                FilterKind kind, int n, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    const double alpha = alpha_at(grid, n);
    double worst = 0.0;
    for (double s : op.sigma) worst = std::max(worst, filter_factor(kind, s, alpha));
    return delta * worst;
}

/// Root mean square of the propagated noise, rho(n)^2 = E||Op_n^-1 xi||^2,
/// for independent zero-mean Gaussian modes with the given standard
/// deviations. White noise is the constant-std special case.
inline double rho_stochastic(const SpectralOperator& op, const RegGrid& grid, FilterKind kind,
                             int n, std::span<const double> mode_std) {
    if (mode_std.size() != op.dim()) throw shape_error("mode_std length does not match operator");
    const double alpha = alpha_at(grid, n);
    long double acc = 0.0L;
    for (std::size_t k = 0; k < op.dim(); ++k) {
        if (!(mode_std[k] >= 0.0))
            throw std::invalid_argument("mode standard deviations must be nonnegative");
        const long double t =
            static_cast<long double>(mode_std[k]) * filter_factor(kind, op.sigma[k], alpha);
        acc += t * t;
    }
    return static_cast<double>(std::sqrt(acc));
}

inline std::vector<double> rho_deterministic_curve(const SpectralOperator& op,
                                                   const RegGrid& grid, FilterKind kind,
                                                   double delta) {
    std::vector<double> rho(static_cast<std::size_t>(grid.n_max) + 1);
    for (int n = 0; n <= grid.n_max; ++n)
        rho[static_cast<std::size_t>(n)] = rho_deterministic(op, grid, kind, n, delta);
    return rho;
}

inline std::vector<double> rho_stochastic_curve(const SpectralOperator& op, const RegGrid& grid,
                                                FilterKind kind,
                                                std::span<const double> mode_std) {
    std::vector<double> rho(static_cast<std::size_t>(grid.n_max) + 1);
    for (int n = 0; n <= grid.n_max; ++n)
        rho[static_cast<std::size_t>(n)] = rho_stochastic(op, grid, kind, n, mode_std);
    return rho;
}

// ---------------------------------------------------------------------------
// Paths

/// Fully materialized regularization path: per-level noisy and clean
/// solutions, the clean error curve, and the noise behavior rho.
struct RegPath {
    RegGrid grid;
    FilterKind filter = FilterKind::tikhonov;
    std::vector<SpectralVector> solutions_noisy; // x_n^delta
    std::vector<SpectralVector> solutions_clean; // x_n
    std::vector<double> err_clean;               // ||x - x_n||
    std::vector<double> rho;
    long solve_count = 0;

    int max_level() const { return grid.n_max; }
    const SpectralVector& noisy_solution(int n) const {
        return solutions_noisy.at(static_cast<std::size_t>(n));
    }
    double rho_at(int n) const { return rho.at(static_cast<std::size_t>(n)); }
};

inline RegPath build_path(const ProblemInstance& inst, const SpectralVector& y_noisy,
                          const RegGrid& grid, FilterKind kind, std::vector<double> rho) {
    validate_grid(grid);
    if (rho.size() != static_cast<std::size_t>(grid.n_max) + 1)
        throw shape_error("rho curve length does not match grid");
    RegPath path;
    path.grid = grid;
    path.filter = kind;
    path.rho = std::move(rho);
    path.err_clean = noise_free_error_curve(inst, grid, kind);
    path.solutions_noisy.reserve(static_cast<std::size_t>(grid.n_max) + 1);
    path.solutions_clean.reserve(static_cast<std::size_t>(grid.n_max) + 1);
    for (int n = 0; n <= grid.n_max; ++n) {
        path.solutions_clean.push_back(regularized_solution(inst.op, inst.y_exact, grid, kind, n));
        path.solutions_noisy.push_back(regularized_solution(inst.op, y_noisy, grid, kind, n));
        ++path.solve_count;
    }
    return path;
}

/// Level-on-demand solution source for rules that must not touch the whole
/// grid. rho is analytic and precomputed; only data solves are counted.
class LazyPath {
public:
    LazyPath(const SpectralOperator& op, SpectralVector y_noisy, const RegGrid& grid,
             FilterKind kind, std::vector<double> rho)
        : op_(&op), y_noisy_(std::move(y_noisy)), grid_(grid), kind_(kind),
          rho_(std::move(rho)),
          cache_(static_cast<std::size_t>(grid.n_max) + 1) {
        validate_grid(grid_);
        if (rho_.size() != cache_.size()) throw shape_error("rho curve length does not match grid");
        if (y_noisy_.size() != op.dim()) throw shape_error("data length does not match operator");
    }

    int max_level() const { return grid_.n_max; }
    const RegGrid& grid() const { return grid_; }
    FilterKind filter() const { return kind_; }

    const SpectralVector& noisy_solution(int n) const {
        auto& slot = cache_.at(static_cast<std::size_t>(n));
        if (!slot) {
            slot = regularized_solution(*op_, y_noisy_, grid_, kind_, n);
            ++solves_;
        }
        return *slot;
    }

    double rho_at(int n) const { return rho_.at(static_cast<std::size_t>(n)); }
    long solves_used() const { return solves_; }

private:
    const SpectralOperator* op_;
    SpectralVector y_noisy_;
    RegGrid grid_;
    FilterKind kind_;
    std::vector<double> rho_;
    mutable std::vector<std::optional<SpectralVector>> cache_;
    mutable long solves_ = 0;
};

// ---------------------------------------------------------------------------
// Regularity constants

struct RegularityConstants {
    double w1 = 0.0; // max_n ||x - x_{n+1}|| / ||x - x_n||     (< 1 expected)
    double w2 = 0.0; // max_n rho(n+1)/rho(n)                    (> 1 expected)
    int n_cut = 0;   // levels 0..n_cut entered the ratios
};

/// Last level whose clean error is still above 1e-10 * ||x||; past that the
/// ratios are saturation noise.
inline int presaturation_cut(std::span<const double> err_clean, double norm_x) {
    int cut = 0;
    for (std::size_t n = 0; n < err_clean.size(); ++n)
        if (err_clean[n] > 1e-10 * norm_x) cut = static_cast<int>(n);
    return cut;
}

inline RegularityConstants estimate_regularity_constants(std::span<const double> err_clean,
                                                         std::span<const double> rho,
                                                         int n_cut) {
    if (n_cut < 1 || static_cast<std::size_t>(n_cut) >= err_clean.size() ||
        rho.size() != err_clean.size())
        throw insufficient_data_error("need at least two usable levels for w1/w2");
    RegularityConstants c;
    c.n_cut = n_cut;
    for (int n = 0; n < n_cut; ++n) {
        const auto i = static_cast<std::size_t>(n);
        if (err_clean[i] > 0.0)
            c.w1 = std::max(c.w1, err_clean[i + 1] / err_clean[i]);
        if (!(rho[i + 1] >= rho[i]))
            throw std::logic_error("rho must be nondecreasing on the estimation range");
        if (rho[i] > 0.0) c.w2 = std::max(c.w2, rho[i + 1] / rho[i]);
    }
    if (c.w1 == 0.0 && c.w2 == 0.0)
        throw insufficient_data_error("no usable ratio below n_cut");
    return c;
}

inline RegularityConstants estimate_regularity_constants(const ProblemInstance& inst,
                                                         const RegGrid& grid, FilterKind kind,
                                                         std::span<const double> rho,
                                                         int n_cut) {
    const auto err = noise_free_error_curve(inst, grid, kind);
    return estimate_regularity_constants(err, rho, n_cut);
}

} // namespace fastbal
