#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace advlab {

/// Counter-based SplitMix64 stream: draw n is mix(seed + n * golden_gamma).
/// Output depends only on (seed, counter), never on the platform's <random>.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static constexpr std::uint64_t at(std::uint64_t seed, std::uint64_t counter) {
        return mix(seed + (counter + 1) * 0x9e3779b97f4a7c15ULL);
    }

    std::uint64_t next() { return at(seed_, counter_++); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n) by rejection, free of modulo bias.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t r = next();
        while (r >= limit) r = next();
        return r % n;
    }

    /// Standard normal via Box-Muller (one value per pair of draws).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Derives an independent stream for a named sub-purpose.
    SplitMix64 fork(std::uint64_t salt) const { return SplitMix64(mix(seed_ ^ mix(salt + 0x632be59bd9b4e019ULL))); }

    std::uint64_t counter() const noexcept { return counter_; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

} // namespace advlab
