#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nfs {

// Single RNG type used everywhere so seeded runs replay bit-for-bit.
using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent sub-seeds from one base seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a over a label, folded into the seed. Gives each pipeline stage its own
// deterministic RNG stream.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view role) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : role) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001b3ULL;
    }
    return mix_seed(base ^ h);
}

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(rng);
}

}  // namespace nfs
