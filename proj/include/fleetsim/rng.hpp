#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>

namespace fleetsim {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for a named stochastic component of an episode.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix64(mix64(seed) ^ mix64(stream * 0x2545f4914f6cdd1dULL + 1));
}

namespace stream {
inline constexpr std::uint64_t kDemand = 1;
inline constexpr std::uint64_t kFleet = 2;
inline constexpr std::uint64_t kPolicy = 3;
inline constexpr std::uint64_t kDisaggregate = 4;
inline constexpr std::uint64_t kPreprocess = 5;
inline constexpr std::uint64_t kSubsample = 6;
}  // namespace stream

/// Seeded generator with platform-independent sampling.
///
/// The standard distributions are implementation-defined, so the few
/// samplers the simulator needs are written against the raw 64-bit
/// Mersenne Twister output, which the standard does pin down.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: empty range");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    /// Uniform integer in the closed range [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (hi < lo) throw std::invalid_argument("Rng::uniform_int: hi < lo");
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<std::int64_t>(engine_());
        return lo + static_cast<std::int64_t>(below(span));
    }

    /// Uniform real in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform real in the open interval (0, 1).
    double open01() {
        double u = uniform01();
        while (u == 0.0) u = uniform01();
        return u;
    }

    /// Index drawn with probability proportional to weights (all >= 0, sum > 0).
    std::size_t categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw std::invalid_argument("Rng::categorical: zero total weight");
        const double target = uniform01() * total;
        double acc = 0.0;
        std::size_t last_positive = 0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] <= 0.0) continue;
            acc += weights[i];
            last_positive = i;
            if (target < acc) return i;
        }
        return last_positive;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace fleetsim
