#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "fastbal/choice.hpp"
#include "fastbal/errors.hpp"
#include "fastbal/noise.hpp"
#include "fastbal/numeric.hpp"
#include "fastbal/regularization.hpp"
#include "fastbal/rng.hpp"
#include "fastbal/spectral.hpp"

namespace fastbal {

// ---------------------------------------------------------------------------
// Source assumption on x

struct AssumptionReport {
    enum class Variant { inverse_norm, two_sided_power };
    Variant variant = Variant::two_sided_power;
    std::optional<double> nu_fit;      // slope of log S(t) vs log t, halved
    std::optional<double> C_fit;       // lower offset of the two-sided bound
    std::optional<double> D_fit;       // upper offset
    double fit_t_min = 0.0;            // fitted window, reported instead of a fixed gamma
    double fit_t_max = 0.0;
    double inverse_norm_partial = 0.0; // sum x_k^2 / sigma_k^4 at K
    double inverse_norm_tail_increment = 0.0; // relative increment over last 10% of modes
    bool satisfied = false;
};

/// Probe both variants of the regularity assumption on x. The energy sums
/// S(t) = sum_{sigma_k^2 <= t} x_k^2 are evaluated on the dyadic grid
/// t in {sigma_j^2}; the slope fit uses the middle half of that grid
/// because both ends are truncation-polluted.
inline AssumptionReport check_source_assumption(const SpectralVector& x,
                                                const SpectralOperator& op) {
    validate_operator(op);
    if (x.size() != op.dim()) throw shape_error("solution length does not match operator");
    bool any = false;
    for (double c : x.coeffs) any = any || c != 0.0;
    if (!any) throw std::invalid_argument("x must not be identically zero");

    const std::size_t K = op.dim();
    AssumptionReport rep;

    // Inverse-norm variant: partial sums of x_k^2 / sigma_k^4, convergence
    // judged on the last 10% of modes.
    {
        long double acc = 0.0L, acc_head = 0.0L;
        const std::size_t tail_start = K - std::max<std::size_t>(1, K / 10);
        for (std::size_t k = 0; k < K; ++k) {
            const long double xk = x.coeffs[k];
            const long double s2 = static_cast<long double>(op.sigma[k]) * op.sigma[k];
            acc += xk * xk / (s2 * s2);
            if (k < tail_start) acc_head = acc;
        }
        rep.inverse_norm_partial = static_cast<double>(acc);
        rep.inverse_norm_tail_increment =
            acc > 0.0L ? static_cast<double>((acc - acc_head) / acc) : 0.0;
    }
    const bool inverse_norm_ok = rep.inverse_norm_tail_increment < 1e-6;

    // Two-sided power variant: S on the dyadic grid, suffix sums in
    // extended precision so supersmooth tails below double range survive.
    std::vector<long double> suffix(K + 1, 0.0L);
    for (std::size_t k = K; k-- > 0;) {
        const long double xk = x.coeffs[k];
        suffix[k] = suffix[k + 1] + xk * xk;
    }
    std::vector<double> logt, logS;
    for (std::size_t j = 0; j < K; ++j) {
        if (j > 0 && op.sigma[j] == op.sigma[j - 1]) continue; // tie: same t, same S
        std::size_t first = j;
        while (first > 0 && op.sigma[first - 1] == op.sigma[j]) --first;
        if (suffix[first] <= 0.0L) continue;
        logt.push_back(2.0 * std::log(op.sigma[j]));
        logS.push_back(static_cast<double>(logl(suffix[first])));
    }
    std::reverse(logt.begin(), logt.end()); // ascending in t
    std::reverse(logS.begin(), logS.end());
    const std::size_t m = logt.size();
    bool two_sided_ok = false;
    if (m >= 4) {
        const std::size_t lo = m / 4, hi = (3 * m) / 4;
        std::span<const double> wt(logt.data() + lo, hi - lo);
        std::span<const double> wS(logS.data() + lo, hi - lo);
        const LineFit fit = fit_line(wt, wS);
        rep.nu_fit = fit.slope / 2.0;
        double omin = std::numeric_limits<double>::infinity(), omax = -omin;
        for (std::size_t i = 0; i < wt.size(); ++i) {
            const double off = wS[i] - fit.slope * wt[i];
            omin = std::min(omin, off);
            omax = std::max(omax, off);
        }
        rep.C_fit = std::exp(omin / 2.0);
        rep.D_fit = std::exp(omax / 2.0);
        rep.fit_t_min = std::exp(wt.front());
        rep.fit_t_max = std::exp(wt.back());
        // Accept when the fitted exponent is admissible and the two-sided
        // constants stay within one order of magnitude on the window.
        two_sided_ok = *rep.nu_fit > 0.0 && *rep.nu_fit < 1.0 && *rep.D_fit <= 10.0 * *rep.C_fit;
    }

    rep.variant = inverse_norm_ok ? AssumptionReport::Variant::inverse_norm
                                  : AssumptionReport::Variant::two_sided_power;
    rep.satisfied = inverse_norm_ok || two_sided_ok;
    return rep;
}

// ---------------------------------------------------------------------------
// Weighted chi-square tail bound

struct TailProbeReport {
    std::vector<double> z_grid;
    std::vector<double> empirical; // P(Z >= z)
    std::vector<double> bound;     // sqrt(2) e^{-z/4}
    std::size_t samples = 0;
    int violations = 0; // z where empirical > bound + 3 binomial SE
};

/// Sample Z = sum alpha_k^2 zeta_k^2 (zeta iid standard normal, weights
/// normalized to sum alpha^2 = 1) and compare the empirical tail with the
/// exponential bound.
inline TailProbeReport tail_bound_probe(std::span<const double> alpha_weights,
                                        std::vector<double> z_grid, std::size_t samples,
                                        std::uint64_t seed) {
    long double wsum = 0.0L;
    for (double a : alpha_weights) {
        if (!(a >= 0.0)) throw std::invalid_argument("weights must be nonnegative");
        wsum += static_cast<long double>(a) * a;
    }
    if (std::fabs(static_cast<double>(wsum) - 1.0) > 1e-12)
        throw std::invalid_argument("weights must satisfy sum alpha^2 = 1");
    if (samples < 10'000) throw std::invalid_argument("tail probe needs >= 1e4 samples");

    TailProbeReport rep;
    rep.z_grid = std::move(z_grid);
    rep.samples = samples;
    std::vector<std::size_t> counts(rep.z_grid.size(), 0);
    Rng rng(seed);
    for (std::size_t s = 0; s < samples; ++s) {
        long double z = 0.0L;
        for (double a : alpha_weights) {
            const double g = rng.next_gaussian();
            z += static_cast<long double>(a) * a * g * g;
        }
        const double zd = static_cast<double>(z);
        for (std::size_t i = 0; i < rep.z_grid.size(); ++i)
            if (zd >= rep.z_grid[i]) ++counts[i];
    }
    rep.empirical.resize(rep.z_grid.size());
    rep.bound.resize(rep.z_grid.size());
    for (std::size_t i = 0; i < rep.z_grid.size(); ++i) {
        const double p = static_cast<double>(counts[i]) / static_cast<double>(samples);
        rep.empirical[i] = p;
        rep.bound[i] = std::sqrt(2.0) * std::exp(-rep.z_grid[i] / 4.0);
        const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
        if (p > rep.bound[i] + 3.0 * se) ++rep.violations;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Fourth-to-second moment ratio

struct MomentProbeReport {
    double ratio = 0.0;   // E||x - x_n^d||^4 / (E||x - x_n^d||^2)^2
    double c5 = 0.0;      // (4 Gamma(3))^{1/4} = 8^{1/4}
    double bound = 0.0;   // c5^2
    double stderr_ = 0.0; // batch-means standard error of the ratio
    bool pass = false;    // ratio <= bound + 3 stderr
};

inline MomentProbeReport moment_ratio_probe(const ProblemInstance& inst, const RegGrid& grid,
                                            FilterKind kind, const NoiseSpec& noise, int n,
                                            std::size_t samples, std::uint64_t seed) {
    if (!is_stochastic(noise))
        throw model_mismatch_error("moment ratio probe needs a stochastic noise model");
    if (samples < 100) throw std::invalid_argument("moment probe needs >= 100 samples");

    const std::size_t K = inst.op.dim();
    std::vector<double> mode_std(K);
    if (const auto* w = std::get_if<WhiteNoise>(&noise.model))
        mode_std.assign(K, w->delta);
    else
        mode_std = std::get<ColoredNoise>(noise.model).mode_std;
    validate_mode_std(mode_std);
    if (mode_std.size() != K) throw shape_error("mode_std length does not match operator");

    const double alpha = alpha_at(grid, n);
    std::vector<double> f(K), r_clean(K);
    for (std::size_t k = 0; k < K; ++k) {
        f[k] = filter_factor(kind, inst.op.sigma[k], alpha);
        r_clean[k] = inst.x_true.coeffs[k] - f[k] * inst.y_exact.coeffs[k];
    }

    constexpr std::size_t n_batches = 20;
    std::vector<long double> m2b(n_batches, 0.0L), m4b(n_batches, 0.0L);
    std::vector<std::size_t> cnt(n_batches, 0);
    Rng rng(seed);
    for (std::size_t s = 0; s < samples; ++s) {
        long double d2 = 0.0L;
        for (std::size_t k = 0; k < K; ++k) {
            const long double r = r_clean[k] - f[k] * (mode_std[k] * rng.next_gaussian());
            d2 += r * r;
        }
        const std::size_t b = s % n_batches;
        m2b[b] += d2;
        m4b[b] += d2 * d2;
        ++cnt[b];
    }
    long double m2 = 0.0L, m4 = 0.0L;
    std::vector<double> batch_ratio;
    for (std::size_t b = 0; b < n_batches; ++b) {
        m2 += m2b[b];
        m4 += m4b[b];
        if (cnt[b] > 0 && m2b[b] > 0.0L) {
            const long double bm2 = m2b[b] / cnt[b], bm4 = m4b[b] / cnt[b];
            batch_ratio.push_back(static_cast<double>(bm4 / (bm2 * bm2)));
        }
    }
    m2 /= static_cast<long double>(samples);
    m4 /= static_cast<long double>(samples);

    MomentProbeReport rep;
    rep.c5 = std::pow(8.0, 0.25);
    rep.bound = rep.c5 * rep.c5;
    rep.ratio = static_cast<double>(m4 / (m2 * m2));
    rep.stderr_ = sample_std(batch_ratio) / std::sqrt(static_cast<double>(batch_ratio.size()));
    rep.pass = rep.ratio <= rep.bound + 3.0 * rep.stderr_;
    return rep;
}

// ---------------------------------------------------------------------------
// Stop-index distribution

struct StopSample {
    int n_star = 0;
    std::optional<int> n_opt;
};

struct StopDistribution {
    std::map<int, double> histogram; // offset j = n_star - n_opt -> frequency
    std::vector<int> n_opt_per_trial;
    std::optional<double> C3_fit;    // from the late-stop geometric profile
    double late_base = 0.0;          // C3_fit e^{-tau^2/4}; rule-of-three bound if no late mass
    bool late_base_is_bound = false; // true when late_base is the zero-count bound
    bool early_decay_ok = false;     // freq decays in (n_opt - n), 3 SE slack
    bool late_decay_ok = false;      // freq decays in (n - n_opt) for j >= 1, 3 SE slack
    std::size_t trials_used = 0;
    std::size_t trials_excluded = 0;
};

namespace detail {
/// SE of the difference of two multinomial cell frequencies.
inline double freq_diff_se(double p1, double p2, std::size_t n) {
    return std::sqrt((p1 * (1.0 - p1) + p2 * (1.0 - p2) + 2.0 * p1 * p2) /
                     static_cast<double>(n));
}
} // namespace detail

inline StopDistribution stop_distribution_probe(std::span<const StopSample> trials,
                                                const BalancingConfig& cfg) {
    StopDistribution d;
    std::map<int, std::size_t> counts;
    for (const auto& t : trials) {
        if (!t.n_opt) {
            ++d.trials_excluded;
            continue;
        }
        d.n_opt_per_trial.push_back(*t.n_opt);
        ++counts[t.n_star - *t.n_opt];
        ++d.trials_used;
    }
    if (d.trials_used == 0)
        throw insufficient_data_error("no trial has an oracle crossing n_opt");
    for (const auto& [j, c] : counts)
        d.histogram[j] = static_cast<double>(c) / static_cast<double>(d.trials_used);

    auto freq = [&](int j) {
        const auto it = d.histogram.find(j);
        return it == d.histogram.end() ? 0.0 : it->second;
    };

    const int min_j = d.histogram.begin()->first;
    const int max_j = d.histogram.rbegin()->first;
    d.early_decay_ok = true;
    for (int j = -1; j - 1 >= min_j; --j) {
        const double p1 = freq(j), p2 = freq(j - 1);
        if (p2 > p1 + 3.0 * detail::freq_diff_se(p1, p2, d.trials_used))
            d.early_decay_ok = false;
    }
    d.late_decay_ok = true;
    for (int j = 1; j + 1 <= max_j; ++j) {
        const double p1 = freq(j), p2 = freq(j + 1);
        if (p2 > p1 + 3.0 * detail::freq_diff_se(p1, p2, d.trials_used))
            d.late_decay_ok = false;
    }

    // Late-stop geometric profile freq(j) ~ (C3 e^{-tau^2/4})^j for j >= 1.
    std::vector<double> js, logf;
    for (int j = 1; j <= max_j; ++j)
        if (freq(j) > 0.0) {
            js.push_back(j);
            logf.push_back(std::log(freq(j)));
        }
    const double tau_factor = std::exp(cfg.tau * cfg.tau / 4.0);
    if (js.size() >= 2) {
        const LineFit fit = fit_line(js, logf);
        d.late_base = std::exp(fit.slope);
        d.C3_fit = d.late_base * tau_factor;
    } else if (js.size() == 1) {
        d.late_base = std::pow(std::exp(logf[0]), 1.0 / js[0]);
        d.C3_fit = d.late_base * tau_factor;
    } else {
        // No late stop observed at all: rule-of-three upper bound on the base.
        d.late_base = 3.0 / static_cast<double>(d.trials_used);
        d.late_base_is_bound = true;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Stochastic error decomposition

struct DecompositionRow {
    int n = 0;
    double lhs = 0.0;     // empirical E||x_n^d - x||^2
    double rhs = 0.0;     // ||x_n - x||^2 + rho(n)^2
    double stderr_ = 0.0; // MC standard error of lhs
    bool pass = false;    // |lhs - rhs| <= 3 stderr
};

/// Check E||x_n^d - x||^2 = ||x_n - x||^2 + rho(n)^2 at every grid level
/// for independent per-mode Gaussian noise.
inline std::vector<DecompositionRow> decomposition_probe(const ProblemInstance& inst,
                                                         const RegGrid& grid, FilterKind kind,
                                                         std::span<const double> mode_std,
                                                         std::size_t samples,
                                                         std::uint64_t seed) {
    validate_grid(grid);
    validate_mode_std(mode_std);
    const std::size_t K = inst.op.dim();
    if (mode_std.size() != K) throw shape_error("mode_std length does not match operator");
    if (samples < 2) throw std::invalid_argument("decomposition probe needs >= 2 samples");

    const std::size_t L = static_cast<std::size_t>(grid.n_max) + 1;
    std::vector<std::vector<double>> f(L, std::vector<double>(K));
    std::vector<std::vector<double>> r_clean(L, std::vector<double>(K));
    std::vector<double> rhs(L);
    const auto err_clean = noise_free_error_curve(inst, grid, kind);
    const auto rho = rho_stochastic_curve(inst.op, grid, kind, mode_std);
    for (std::size_t n = 0; n < L; ++n) {
        const double alpha = alpha_at(grid, static_cast<int>(n));
        for (std::size_t k = 0; k < K; ++k) {
            f[n][k] = filter_factor(kind, inst.op.sigma[k], alpha);
            r_clean[n][k] = inst.x_true.coeffs[k] - f[n][k] * inst.y_exact.coeffs[k];
        }
        rhs[n] = err_clean[n] * err_clean[n] + rho[n] * rho[n];
    }

    // Welford updates: the per-sample spread of d^2 can sit many orders of
    // magnitude below its mean (noise-free limit), where the textbook
    // sum-of-squares variance cancels catastrophically.
    std::vector<long double> mean_d2(L, 0.0L), m2_d2(L, 0.0L);
    std::vector<double> xi(K);
    Rng rng(seed);
    for (std::size_t s = 0; s < samples; ++s) {
        for (std::size_t k = 0; k < K; ++k) xi[k] = mode_std[k] * rng.next_gaussian();
        for (std::size_t n = 0; n < L; ++n) {
            long double d2 = 0.0L;
            const auto& fn = f[n];
            const auto& rn = r_clean[n];
            for (std::size_t k = 0; k < K; ++k) {
                const long double r = rn[k] - fn[k] * xi[k];
                d2 += r * r;
            }
            const long double delta1 = d2 - mean_d2[n];
            mean_d2[n] += delta1 / static_cast<long double>(s + 1);
            m2_d2[n] += delta1 * (d2 - mean_d2[n]);
        }
    }

    std::vector<DecompositionRow> rows(L);
    for (std::size_t n = 0; n < L; ++n) {
        DecompositionRow& row = rows[n];
        row.n = static_cast<int>(n);
        const long double var = m2_d2[n] / static_cast<long double>(samples - 1);
        row.lhs = static_cast<double>(mean_d2[n]);
        row.rhs = rhs[n];
        row.stderr_ = static_cast<double>(
            std::sqrt(std::max(var, 0.0L) / static_cast<long double>(samples)));
        row.pass = std::fabs(row.lhs - row.rhs) <= 3.0 * row.stderr_;
    }
    return rows;
}

inline std::vector<DecompositionRow> decomposition_probe(const ProblemInstance& inst,
                                                         const RegGrid& grid, FilterKind kind,
                                                         double delta, std::size_t samples,
                                                         std::uint64_t seed) {
    std::vector<double> mode_std(inst.op.dim(), delta);
    return decomposition_probe(inst, grid, kind, mode_std, samples, seed);
}

// ---------------------------------------------------------------------------
// Structured report documents

inline nlohmann::json json_of(const AssumptionReport& rep) {
    nlohmann::json j;
    j["report"] = "assumption";
    j["variant"] = rep.variant == AssumptionReport::Variant::inverse_norm ? "inverse_norm"
                                                                          : "two_sided_power";
    if (rep.nu_fit) j["nu_fit"] = *rep.nu_fit;
    if (rep.C_fit) j["C_fit"] = *rep.C_fit;
    if (rep.D_fit) j["D_fit"] = *rep.D_fit;
    j["fit_t_min"] = rep.fit_t_min;
    j["fit_t_max"] = rep.fit_t_max;
    j["inverse_norm_partial"] = rep.inverse_norm_partial;
    j["inverse_norm_tail_increment"] = rep.inverse_norm_tail_increment;
    j["satisfied"] = rep.satisfied;
    return j;
}

inline nlohmann::json json_of(const TailProbeReport& rep) {
    nlohmann::json j;
    j["report"] = "tail_bound";
    j["z_grid"] = rep.z_grid;
    j["empirical"] = rep.empirical;
    j["bound"] = rep.bound;
    j["samples"] = rep.samples;
    j["violations"] = rep.violations;
    return j;
}

inline nlohmann::json json_of(const MomentProbeReport& rep) {
    nlohmann::json j;
    j["report"] = "moment_ratio";
    j["ratio"] = rep.ratio;
    j["c5"] = rep.c5;
    j["bound"] = rep.bound;
    j["stderr"] = rep.stderr_;
    j["pass"] = rep.pass;
    return j;
}

inline nlohmann::json json_of(const StopDistribution& d) {
    nlohmann::json j;
    j["report"] = "stop_distribution";
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [offset, freq] : d.histogram) hist[std::to_string(offset)] = freq;
    j["histogram"] = hist;
    j["n_opt_per_trial"] = d.n_opt_per_trial;
    if (d.C3_fit) j["C3_fit"] = *d.C3_fit;
    j["late_base"] = d.late_base;
    j["late_base_is_bound"] = d.late_base_is_bound;
    j["early_decay_ok"] = d.early_decay_ok;
    j["late_decay_ok"] = d.late_decay_ok;
    j["trials_used"] = d.trials_used;
    j["trials_excluded"] = d.trials_excluded;
    return j;
}

inline nlohmann::json json_of(const std::vector<DecompositionRow>& rows) {
    nlohmann::json j;
    j["report"] = "decomposition";
    j["levels"] = nlohmann::json::array();
    for (const auto& row : rows) {
        nlohmann::json rj;
        rj["n"] = row.n;
        rj["lhs"] = row.lhs;
        rj["rhs"] = row.rhs;
        rj["stderr"] = row.stderr_;
        rj["pass"] = row.pass;
        j["levels"].push_back(rj);
    }
    return j;
}

} // namespace fastbal
