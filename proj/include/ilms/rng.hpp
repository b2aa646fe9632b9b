#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace ilms {

/// What a substream is used for. Each purpose gets its own key so that, e.g.,
/// an ideal-link run that never draws channel gains consumes exactly the same
/// regressor and noise samples as a fading run with the same seed.
enum class Stream : std::uint64_t {
    Regressor = 1,
    Measurement = 2,
    ChannelGain = 3,
    ChannelNoise = 4,
    ChannelEstimate = 5,
    Config = 6,
    Basis = 7,
};

/// SplitMix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Counter-based generator addressed by (seed, run, node, iteration, purpose).
///
/// Constructing one is a handful of integer mixes, so the engine creates a
/// fresh generator per draw site instead of threading state through the ring.
/// Two generators with the same coordinates produce the same sequence no matter
/// which thread builds them or in what order.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, std::uint64_t run, std::uint64_t node, std::uint64_t iteration,
               Stream purpose) noexcept
        : state_(key(seed, run, node, iteration, static_cast<std::uint64_t>(purpose))) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Standard normal.
    double normal() { return normal_(*this); }

private:
    static constexpr std::uint64_t key(std::uint64_t seed, std::uint64_t run, std::uint64_t node,
                                       std::uint64_t iteration, std::uint64_t purpose) noexcept {
        std::uint64_t h = mix64(seed);
        h = mix64(h ^ run);
        h = mix64(h ^ (node + 0x100000000ULL));
        h = mix64(h ^ (iteration + 0x200000000ULL));
        return mix64(h ^ (purpose << 56));
    }

    std::uint64_t state_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace ilms
