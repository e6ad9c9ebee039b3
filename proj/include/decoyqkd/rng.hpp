#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace decoyqkd::rng {

// std:: distributions are implementation-defined, so everything drawn from
// the engine goes through these helpers to keep runs portable.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(splitmix64(seed + (index + 1) * 0x9E3779B97F4A7C15ULL));
}

/// Uniform on [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& eng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(eng);
}

/// Poisson draw by sequential CDF inversion. `exp_neg_mean` is e^{-mean},
/// passed in so callers can hoist it out of hot loops.
inline int poisson(std::mt19937_64& eng, double mean, double exp_neg_mean) {
    const double u = uniform01(eng);
    double p = exp_neg_mean;
    double cdf = p;
    int k = 0;
    while (u >= cdf && p > 0.0) {
        ++k;
        p *= mean / k;
        cdf += p;
    }
    return k;
}

inline int poisson(std::mt19937_64& eng, double mean) {
    return poisson(eng, mean, std::exp(-mean));
}

}  // namespace decoyqkd::rng
