#pragma once

/**
 * Deterministic, portable random numbers.
 *
 * Engine: std::mt19937_64 (fully specified by the C++ standard, so the raw
 * 64-bit stream is identical on every conforming implementation). Doubles
 * come from explicit conversions rather than std::*_distribution, whose
 * output is implementation-defined:
 *   uniform [0,1): (x >> 11) * 2^-53
 *   normal:        Box-Muller on two uniforms
 * Stream seeds are derived from a base seed with one splitmix64 step.
 */

#include <cmath>
#include <cstdint>
#include <random>

namespace dashq {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Independent stream seed for (base seed, stream index).
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 1));
}

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [lo, hi], inclusive, by rejection (no modulo bias).
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return lo + static_cast<int64_t>(x % span);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace dashq
