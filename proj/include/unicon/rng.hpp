#pragma once

#include <cstdint>
#include <random>

namespace unicon {

/// Deterministic random stream. The engine is mt19937_64 (portable state
/// sequence); the distributions below are implemented by hand because the
/// standard library ones are implementation-defined and the test suite pins
/// draws across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        // fixed-point multiply keeps the mapping identical everywhere
        const unsigned __int128 prod =
            static_cast<unsigned __int128>(eng_()) * static_cast<unsigned __int128>(span);
        return lo + static_cast<std::int64_t>(prod >> 64);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Independent child stream. Mixing runs through splitmix64 twice so that
    /// nearby stream ids do not correlate.
    Rng spawn(std::uint64_t stream) const {
        return Rng(mix(mix(seed_ ^ 0x9e3779b97f4a7c15ull) + stream));
    }

    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace unicon
