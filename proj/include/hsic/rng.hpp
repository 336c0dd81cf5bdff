#pragma once

#include <cstdint>
#include <random>

namespace hsic {

/// Stream-splitting for reproducible experiments.
///
/// Every source of randomness in the library is derived from a single
/// 64-bit experiment seed plus a stream tag. Derivation is a splitmix64
/// mix of (seed, tag), so adding a new consumer (a new tag) never
/// perturbs the draws of existing ones.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stream tags used across the library. Fixed values: reordering the
/// enum must not change existing streams.
enum class Stream : std::uint64_t {
    Beta = 1,
    SourceX = 2,
    TargetX = 3,
    SourceNoise = 4,
    TargetNoise = 5,
    Shuffle = 6,
    Dropout = 7,
    Init = 8,
    Subsample = 9,
    Rotation = 10,
    Split = 11,
    LearningRate = 12,
    Repeat = 13,
};

inline std::uint64_t derive(std::uint64_t seed, Stream stream) {
    return splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(stream));
}

inline std::uint64_t derive(std::uint64_t seed, Stream stream, std::uint64_t index) {
    return splitmix64(derive(seed, stream) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline std::mt19937_64 engine(std::uint64_t seed, Stream stream) {
    return std::mt19937_64(derive(seed, stream));
}

inline std::mt19937_64 engine(std::uint64_t seed, Stream stream, std::uint64_t index) {
    return std::mt19937_64(derive(seed, stream, index));
}

} // namespace rng
} // namespace hsic
