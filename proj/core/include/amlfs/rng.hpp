#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace amlfs {

// All randomness flows through Rng. The engine (mt19937_64) is pinned by the
// standard, and the uniform/gaussian mappings are done by hand below, so a
// given seed yields the same stream on every platform. The <random>
// distribution classes are implementation-defined and must not be used.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stream id for (seed, epoch, candidate). Worker scheduling never touches
// this, which is what makes epoch records independent of worker_count.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t epoch,
                                   std::uint64_t candidate) {
    return splitmix64(splitmix64(splitmix64(seed) ^ epoch) ^ candidate);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        return static_cast<int>(uniform() * static_cast<double>(n));
    }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform(); // (0, 1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double mean, double stddev) {
        return mean + stddev * gaussian();
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace amlfs
