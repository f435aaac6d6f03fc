#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "spoofloc/common.hpp"

namespace spoofloc {

/// Deterministic random source. Wraps mt19937_64 but draws uniforms and
/// normals through our own arithmetic instead of std::*_distribution, so a
/// given seed yields the same stream on every compiler and platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) fail_validation("Rng::below called with n == 0");
        // Rejection sampling keeps the draw unbiased.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (no cached spare, keeps the stream
    /// position a pure function of the number of draws).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Child generator for parallel or per-item streams. Mixes the key into
    /// the construction seed, so siblings are decorrelated and independent of
    /// how far this generator has advanced.
    Rng fork(std::uint64_t key) const {
        std::uint64_t h = seed_ ^ (0x9E3779B97F4A7C15ull + key);
        h ^= h >> 30;
        h *= 0xBF58476D1CE4E5B9ull;
        h ^= h >> 27;
        h *= 0x94D049BB133111EBull;
        h ^= h >> 31;
        return Rng(h);
    }

    Rng fork_named(const std::string& name) const { return fork(fnv1a(name)); }

    std::string serialize_state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void restore_state(const std::string& state) {
        std::istringstream is(state);
        is >> engine_;
        if (!is) fail_runtime("failed to restore RNG state");
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

} // namespace spoofloc
