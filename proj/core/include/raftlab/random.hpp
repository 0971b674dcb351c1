#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace raftlab {

using Rng = std::mt19937_64;

// Stream tags mixed into derived seeds so independent consumers of one run
// seed never share a random stream.
namespace stream {
inline constexpr std::uint64_t kWorld = 0x5741;
inline constexpr std::uint64_t kPrompts = 0x5052;
inline constexpr std::uint64_t kSamples = 0x5341;
inline constexpr std::uint64_t kEval = 0x4556;
inline constexpr std::uint64_t kNoise = 0x4e4f;
inline constexpr std::uint64_t kNoiseOffset = 0x4e4f4f;
inline constexpr std::uint64_t kComparisons = 0x434d;
inline constexpr std::uint64_t kReward = 0x5257;
}  // namespace stream

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Hashes an ordered tuple of integers into a seed. Used for per-(run, stage,
/// prompt, ...) streams so that parallel consumers stay deterministic.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

/// Uniform double in [0, 1) from the top 53 bits of one engine output.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). n must be positive.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Index i such that cdf[i-1] <= u * cdf.back() < cdf[i]. cdf must be
/// nondecreasing with a positive last entry; zero-mass entries are never
/// returned.
std::size_t draw_from_cdf(std::span<const double> cdf, double u);

}  // namespace raftlab
