#pragma once

#include <cstdint>
#include <random>

namespace levyq {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Each (seed, stream, index) triple owns an independent generator, so the
// assignment of replications to worker threads never changes the draws.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    std::uint64_t s = seed;
    s ^= 0xA409D6B8E3C2F1A7ULL * (stream + 1);
    s ^= 0xC6A4A7935BD1E995ULL * (index + 1);
    std::uint64_t mixed = splitmix64(s);
    mixed ^= splitmix64(s);
    return mixed;
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return Rng(derive_seed(seed, stream, index));
}

inline double draw_exponential(Rng& rng, double rate) {
    std::exponential_distribution<double> d(rate);
    return d(rng);
}

inline double draw_gamma(Rng& rng, double shape, double rate) {
    std::gamma_distribution<double> d(shape, 1.0 / rate);
    return d(rng);
}

inline double draw_uniform(Rng& rng) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    return d(rng);
}

}  // namespace levyq
