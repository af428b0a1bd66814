#pragma once

#include <cstdint>
#include <random>

namespace wtdl {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based child seed: stream `k` of `master`. Replication r of a study
/// uses derive_seed(master_seed, r); stages inside a replication derive from
/// that seed with small fixed stream ids.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t k) {
  return splitmix64(master ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
}

}  // namespace wtdl
