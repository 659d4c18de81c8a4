// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace icrlsm {

/// SplitMix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    return mix64(mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL)) ^ index);
}

/// Seeded random stream. Streams built from distinct (seed, stream, index)
/// triples are statistically independent, so per-sample generation can be
/// done in any order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}
    Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0)
        : engine_(derive_seed(seed, stream, index)) {}

    double normal() { return normal_(engine_); }
    double normal(double mean, double stddev) { return mean + stddev * normal_(engine_); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    bool bernoulli(double p) { return uniform() < p; }
    std::uint64_t uniform_int(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
    }
    std::uint64_t next_u64() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

// Stream identifiers for the disjoint RNG streams used across the pipeline.
namespace streams {
inline constexpr std::uint64_t kGraph = 1;
inline constexpr std::uint64_t kScm = 2;
inline constexpr std::uint64_t kRotation = 3;
inline constexpr std::uint64_t kTrainSplit = 10;
inline constexpr std::uint64_t kValSplit = 11;
inline constexpr std::uint64_t kTestSplit = 12;
inline constexpr std::uint64_t kModelInit = 20;
inline constexpr std::uint64_t kShuffle = 21;
inline constexpr std::uint64_t kTrainNoise = 22;
inline constexpr std::uint64_t kValNoise = 23;
inline constexpr std::uint64_t kForest = 30;
}  // namespace streams

}  // namespace icrlsm
