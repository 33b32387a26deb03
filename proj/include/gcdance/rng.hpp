#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gcdance {

// Deterministic random source. mt19937_64 is fully specified by the standard;
// the uniform/normal transforms are written out here because the std
// distributions are implementation-defined and would break byte-for-byte
// reproducibility of seeded runs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // Independent child stream: splitmix64 mix of (seed, stream).
    Rng derive(std::uint64_t stream) const {
        std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ull * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

    std::uint64_t bits() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) { return n ? engine_() % n : 0; }

    // Standard normal via Box-Muller with a cached spare.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace gcdance
