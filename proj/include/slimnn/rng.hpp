#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace slimnn {

// All randomness in the library flows through this wrapper so that results
// are reproducible from a single 64-bit seed. Floating-point draws are built
// from raw engine output instead of std::uniform_real_distribution, whose
// output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Standard normal via Box-Muller; caches the second draw.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 == 0.0) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Index in [0, n).
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(gen_() % n);
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives a child seed from a parent seed and a list of stream labels
// (width, trial, rep, ...). Used everywhere a run forks into sub-streams.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
    return h;
}

}  // namespace slimnn
