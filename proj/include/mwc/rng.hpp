#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mwc {

// Deterministic RNG used throughout the simulator. mt19937_64 output is
// fully specified by the standard, and the uniform/exponential transforms
// below avoid std::*_distribution (whose streams differ across library
// implementations), so seeded runs are bit-reproducible on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform angle in (-pi, pi].
    double angle() {
        return std::numbers::pi - 2.0 * std::numbers::pi * uniform();
    }

    // Exponential with given mean (> 0).
    double exponential(double mean) {
        // -log1p(-u) maps u in [0,1) to (0, inf) without hitting log(0)
        return -std::log1p(-uniform()) * mean;
    }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace mwc
