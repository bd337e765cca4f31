#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace pathvit {

// Deterministic random source. mt19937_64 output is pinned by the standard;
// the distributions below are implemented by hand because the std:: ones are
// implementation-defined and would break bit-reproducibility across stdlibs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    // Derives an independent stream, e.g. one per epoch or per trial.
    Rng stream(std::uint64_t salt) const { return Rng(seed_mix(seed_, salt)); }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
    std::uint64_t uniform_index(std::uint64_t n) { return engine_() % n; }

    // Box-Muller without state caching so call order alone fixes the sequence.
    double normal() {
        double u1 = uniform();
        const double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Resamples until within two standard deviations, the usual ViT init rule.
    double truncated_normal(double stddev) {
        for (;;) {
            const double x = normal(0.0, stddev);
            if (x >= -2.0 * stddev && x <= 2.0 * stddev) return x;
        }
    }

    template <class It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const std::uint64_t j = uniform_index(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    static std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b) {
        // splitmix64 finalizer over the xor; good stream separation.
        std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
    std::uint64_t seed_ = 0;
};

}  // namespace pathvit
