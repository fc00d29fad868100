#pragma once

#include <cmath>
#include <cstdint>

namespace randls {

/// Counter-based splittable pseudo-random generator (SplitMix64).
///
/// The state is a plain 64-bit counter advanced by an odd increment, with the
/// output produced by a fixed finalization mix. All derived quantities
/// (uniform doubles, bounded integers, normal deviates via the polar method)
/// are pure functions of the consumed counter values, so any run is
/// reproducible bit-for-bit from (seed, gamma). split() derives a generator
/// whose stream is independent of the parent's subsequent output.
class Rng {
public:
    static constexpr std::uint64_t kDefaultGamma = 0x9e3779b97f4a7c15ULL;

    explicit Rng(std::uint64_t seed, std::uint64_t gamma = kDefaultGamma)
        : state_(seed), gamma_(gamma | 1ULL) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += gamma_);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Unbiased uniform integer in [0, n). n must be positive.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal deviate, Marsaglia polar method. Pairs are generated
    /// together; the spare is cached.
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_unit() - 1.0;
            v = 2.0 * next_unit() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    /// Derive a generator with an independent stream; advances this one.
    Rng split() {
        const std::uint64_t seed = next_u64();
        const std::uint64_t gamma = next_u64() | 1ULL;
        return Rng(seed, gamma);
    }

private:
    std::uint64_t state_;
    std::uint64_t gamma_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace randls
