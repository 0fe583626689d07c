#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fastbal {

/// Euclidean norm with extended-precision accumulation. The long double
/// accumulator keeps sums of per-mode monotone terms monotone, which some
/// path invariants assert exactly.
inline double l2_norm(std::span<const double> v) {
    long double acc = 0.0L;
    for (double c : v) acc += static_cast<long double>(c) * c;
    return static_cast<double>(std::sqrt(acc));
}

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
    long double acc = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double d = static_cast<long double>(a[i]) - b[i];
        acc += d * d;
    }
    return static_cast<double>(std::sqrt(acc));
}

inline double mean(std::span<const double> v) {
    long double acc = 0.0L;
    for (double c : v) acc += c;
    return v.empty() ? 0.0 : static_cast<double>(acc / v.size());
}

/// Sample standard deviation (divisor n-1).
inline double sample_std(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    long double acc = 0.0L;
    for (double c : v) {
        const long double d = static_cast<long double>(c) - m;
        acc += d * d;
    }
    return static_cast<double>(std::sqrt(acc / (v.size() - 1)));
}

/// Quantile with linear interpolation on the sorted copy; q in [0,1].
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

/// Shortest decimal representation that round-trips to the same double.
inline std::string format_double(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

/// Ordinary least squares slope/intercept of y against x.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    const double mx = mean(x);
    const double my = mean(y);
    long double sxx = 0.0L, sxy = 0.0L;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const long double dx = static_cast<long double>(x[i]) - mx;
        sxx += dx * dx;
        sxy += dx * (static_cast<long double>(y[i]) - my);
    }
    LineFit f;
    f.slope = sxx > 0.0L ? static_cast<double>(sxy / sxx) : 0.0;
    f.intercept = my - f.slope * mx;
    return f;
}

} // namespace fastbal
