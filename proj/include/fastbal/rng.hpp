#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace fastbal {

namespace detail {
/// 64-bit avalanche (SplitMix64 finalizer).
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
} // namespace detail

/// Derive an independent stream seed from a master seed and a stream id.
/// Used to give every (instance, noise level, replicate) its own stream so
/// concurrent trials stay reproducible.
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t id) {
    return detail::mix64(seed + 0x9E3779B97F4A7C15ULL * (id + 1));
}

inline std::uint64_t substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return substream(substream(seed, a), b);
}

inline std::uint64_t substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                               std::uint64_t c) {
    return substream(substream(seed, a, b), c);
}

/// Counter-based generator (SplitMix64: Weyl sequence + avalanche).
/// Fully specified here, so streams are bit-reproducible across platforms;
/// the standard library distributions are not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return detail::mix64(state_);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms per
    /// call; the sine branch is discarded to keep stream accounting simple.
    double next_gaussian() {
        const double u1 = 1.0 - next_unit(); // (0, 1], keeps log finite
        const double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

} // namespace fastbal
