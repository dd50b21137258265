#pragma once

#include <cstdint>

namespace gmskip {

/// splitmix64 with the published constants. Every random draw in the
/// project (weights, calibration sets, random baselines) goes through this.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Top 53 bits to [0, 1), then affinely to [-1, 1).
    constexpr double next_signed_unit() noexcept {
        const double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
        return 2.0 * u - 1.0;
    }

    /// next() % n; n must be positive.
    constexpr std::uint64_t next_below(std::uint64_t n) noexcept { return next() % n; }

private:
    std::uint64_t state_;
};

}  // namespace gmskip
