#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dept {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent seed stream from a run seed and a purpose tag, so
// that e.g. prompt init and batch shuffling never share a generator.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return splitmix64(h ^ splitmix64(seed));
}

inline Rng make_rng(std::uint64_t seed, std::string_view tag) {
    return Rng(derive_seed(seed, tag));
}

} // namespace dept
