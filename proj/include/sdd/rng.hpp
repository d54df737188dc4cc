#pragma once

#include <cstdint>
#include <random>

namespace sdd {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Independent child seed for (stream, counter) under a run seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t counter) {
    return splitmix64(splitmix64(base ^ splitmix64(stream)) + counter);
}

// Named sub-streams of a run seed.
inline constexpr std::uint64_t kMaskStream = 1;
inline constexpr std::uint64_t kShuffleStream = 2;
inline constexpr std::uint64_t kInitStream = 3;
inline constexpr std::uint64_t kSplitStream = 4;

inline std::uint64_t derive_mask_seed(std::uint64_t base, std::uint64_t counter) {
    return derive_seed(base, kMaskStream, counter);
}

// Uniform in [0, 1) with 53 random bits; layout-independent across stdlibs.
inline double uniform01(Engine& eng) { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

}  // namespace sdd
