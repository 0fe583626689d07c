#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fastbal/errors.hpp"
#include "fastbal/numeric.hpp"
#include "fastbal/rng.hpp"

#include "json.hpp"

namespace fastbal {

/// A compact operator given by its singular values in the SVD bases:
/// sigma must be strictly positive and nonincreasing, with at least two
/// modes. Everything downstream works in these coordinates.
struct SpectralOperator {
    std::vector<double> sigma;

    std::size_t dim() const { return sigma.size(); }
};

/// Coefficients of an element of X (u-basis) or Y (v-basis); which one is
/// clear from context. Length must match the paired operator.
struct SpectralVector {
    std::vector<double> coeffs;

    std::size_t size() const { return coeffs.size(); }
    double norm() const { return l2_norm(coeffs); }
};

inline double distance(const SpectralVector& a, const SpectralVector& b) {
    if (a.size() != b.size()) throw shape_error("spectral vectors differ in length");
    return l2_distance(a.coeffs, b.coeffs);
}

/// Synthetic forward problem with known ground truth. y_exact is kept in
/// sync with sigma * x_true at construction; loaders re-check it.
struct ProblemInstance {
    SpectralOperator op;
    SpectralVector x_true;  // u-basis
    SpectralVector y_exact; // v-basis
    std::string label;
};

inline void validate_operator(const SpectralOperator& op) {
    if (op.dim() < 2) throw std::invalid_argument("operator needs at least 2 modes");
    for (std::size_t k = 0; k < op.dim(); ++k) {
        if (!(op.sigma[k] > 0.0) || !std::isfinite(op.sigma[k]))
            throw std::invalid_argument("sigma must be strictly positive and finite");
        if (k > 0 && op.sigma[k] > op.sigma[k - 1])
            throw std::invalid_argument("sigma must be nonincreasing");
    }
}

// ---------------------------------------------------------------------------
// Generators

struct GeometricDecay {
    double ratio; // in (0,1); sigma_k = scale * ratio^(k-1)
};

struct PolynomialDecay {
    double exponent; // > 0; sigma_k = scale * k^-exponent
};

using DecaySpec = std::variant<GeometricDecay, PolynomialDecay>;

inline SpectralOperator make_operator(const DecaySpec& decay, std::size_t K, double scale) {
    if (K < 2) throw std::invalid_argument("K must be >= 2");
    if (!(scale > 0.0)) throw std::invalid_argument("scale must be positive");
    SpectralOperator op;
    op.sigma.resize(K);
    if (const auto* g = std::get_if<GeometricDecay>(&decay)) {
        if (!(g->ratio > 0.0 && g->ratio < 1.0))
            throw std::invalid_argument("geometric decay ratio must lie in (0,1)");
        double s = scale;
        for (std::size_t k = 0; k < K; ++k, s *= g->ratio) op.sigma[k] = s;
    } else {
        const auto& p = std::get<PolynomialDecay>(decay);
        if (!(p.exponent > 0.0))
            throw std::invalid_argument("polynomial decay exponent must be positive");
        for (std::size_t k = 0; k < K; ++k)
            op.sigma[k] = scale * std::pow(static_cast<double>(k + 1), -p.exponent);
    }
    validate_operator(op);
    return op;
}

struct PowerSmoothness {
    double nu; // in (0,1); x_k = sigma_k^(2 nu), two-sided power-law energy tails
};

struct Supersmooth {
    double s; // > 2; x_k = sigma_k^s, makes sum x_k^2/sigma_k^4 convergent
};

using SmoothnessSpec = std::variant<PowerSmoothness, Supersmooth>;

/// Multiplicative uniform jitter in [-amplitude, amplitude], seeded.
/// Breaks exact scale invariance of generated problems; amplitude 0
/// disables it.
inline SpectralVector make_solution(const SpectralOperator& op, const SmoothnessSpec& smooth,
                                    std::uint64_t seed, double jitter_amplitude = 0.1) {
    validate_operator(op);
    if (!(jitter_amplitude >= 0.0 && jitter_amplitude <= 0.1))
        throw std::invalid_argument("jitter amplitude must lie in [0, 0.1]");
    double expo = 0.0;
    if (const auto* p = std::get_if<PowerSmoothness>(&smooth)) {
        if (!(p->nu > 0.0 && p->nu < 1.0))
            throw std::invalid_argument("power smoothness nu must lie in (0,1)");
        expo = 2.0 * p->nu;
    } else {
        const auto& ss = std::get<Supersmooth>(smooth);
        if (!(ss.s > 2.0)) throw std::invalid_argument("supersmooth exponent must exceed 2");
        expo = ss.s;
    }
    SpectralVector x;
    x.coeffs.resize(op.dim());
    Rng rng(seed);
    for (std::size_t k = 0; k < op.dim(); ++k) {
        double c = std::pow(op.sigma[k], expo);
        if (jitter_amplitude > 0.0)
            c *= 1.0 + jitter_amplitude * (2.0 * rng.next_unit() - 1.0);
        x.coeffs[k] = c;
    }
    return x;
}

inline SpectralVector apply_forward(const SpectralOperator& op, const SpectralVector& x) {
    if (x.size() != op.dim()) throw shape_error("solution length does not match operator");
    SpectralVector y;
    y.coeffs.resize(op.dim());
    for (std::size_t k = 0; k < op.dim(); ++k) y.coeffs[k] = op.sigma[k] * x.coeffs[k];
    return y;
}

inline ProblemInstance make_instance(SpectralOperator op, SpectralVector x_true,
                                     std::string label) {
    ProblemInstance inst;
    inst.y_exact = apply_forward(op, x_true);
    inst.op = std::move(op);
    inst.x_true = std::move(x_true);
    inst.label = std::move(label);
    return inst;
}

/// Fraction of ||x||^2 carried by the last 10% of modes. Truncation to K
/// modes is only faithful when this is tiny; callers warn above 1e-6.
inline double tail_energy_fraction(const SpectralVector& x) {
    const std::size_t K = x.size();
    if (K == 0) return 0.0;
    const std::size_t tail_start = K - std::max<std::size_t>(1, K / 10);
    long double total = 0.0L, tail = 0.0L;
    for (std::size_t k = 0; k < K; ++k) {
        const long double c2 = static_cast<long double>(x.coeffs[k]) * x.coeffs[k];
        total += c2;
        if (k >= tail_start) tail += c2;
    }
    return total > 0.0L ? static_cast<double>(tail / total) : 0.0;
}

// ---------------------------------------------------------------------------
// Problem files (schema v=1). Doubles are serialized in shortest
// round-trip form, so save/load preserves every finite value bit-exactly.

inline void validate_instance(const ProblemInstance& inst) {
    validate_operator(inst.op);
    if (inst.x_true.size() != inst.op.dim())
        throw schema_error("field x_true: length does not match sigma");
    if (inst.y_exact.size() != inst.op.dim())
        throw schema_error("field y_exact: length does not match sigma");
    for (std::size_t k = 0; k < inst.op.dim(); ++k) {
        if (inst.y_exact.coeffs[k] != inst.op.sigma[k] * inst.x_true.coeffs[k])
            throw schema_error("field y_exact: entry " + std::to_string(k) +
                               " does not equal sigma * x_true");
    }
}

inline nlohmann::json instance_to_json(const ProblemInstance& inst) {
    return nlohmann::json{{"v", 1},
                          {"label", inst.label},
                          {"sigma", inst.op.sigma},
                          {"x_true", inst.x_true.coeffs},
                          {"y_exact", inst.y_exact.coeffs}};
}

inline ProblemInstance instance_from_json(const nlohmann::json& j) {
    auto require = [&](const char* field) -> const nlohmann::json& {
        if (!j.contains(field)) throw schema_error(std::string("missing field ") + field);
        return j.at(field);
    };
    if (!require("v").is_number_integer() || j.at("v").get<int>() != 1)
        throw schema_error("field v: expected schema version 1");
    ProblemInstance inst;
    try {
        inst.label = require("label").get<std::string>();
        inst.op.sigma = require("sigma").get<std::vector<double>>();
        inst.x_true.coeffs = require("x_true").get<std::vector<double>>();
        inst.y_exact.coeffs = require("y_exact").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(std::string("malformed problem file: ") + e.what());
    }
    try {
        validate_operator(inst.op);
    } catch (const std::invalid_argument& e) {
        throw schema_error(std::string("field sigma: ") + e.what());
    }
    validate_instance(inst);
    return inst;
}

inline void save_problem(const ProblemInstance& inst, const std::filesystem::path& path) {
    validate_instance(inst);
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << instance_to_json(inst).dump(2) << '\n';
    if (!out) throw io_error("write failed: " + path.string());
}

inline ProblemInstance load_problem(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(std::string("unparseable problem file: ") + e.what());
    }
    return instance_from_json(j);
}

} // namespace fastbal
