#pragma once

#include <cstdint>

namespace voluntier::gp {

/// SplitMix64. The generator identity is part of the wire contract: two hosts
/// running the same work unit must draw the same sequence, so everything here
/// is integer arithmetic with no platform-dependent distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

    std::uint64_t next() noexcept
    {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) noexcept
    {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t x = next();
            if (x >= threshold) {
                return x % bound;
            }
        }
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool chance(double p) noexcept { return uniform() < p; }

    std::uint64_t state() const noexcept { return state_; }
    void set_state(std::uint64_t s) noexcept { state_ = s; }

private:
    std::uint64_t state_;
};

} // namespace voluntier::gp
