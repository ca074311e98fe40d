#pragma once

#include <cstdint>
#include <random>

namespace hsr {

// splitmix64 finalizer; used to derive independent streams (init, split,
// per-epoch shuffles) from one user seed without correlated low bits.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// fixed stream ids so every consumer draws from its own generator
inline constexpr std::uint64_t kStreamInit = 0x01;
inline constexpr std::uint64_t kStreamSplit = 0x02;
inline constexpr std::uint64_t kStreamEpochBase = 0x1000;

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(mix_seed(seed, stream));
}

}  // namespace hsr
