#pragma once

// Portable random streams.
//
// The engine is std::mt19937_64, whose output sequence for a given 64-bit seed
// is fixed by the C++ standard. Integer draws use rejection sampling on the raw
// 64-bit output rather than std::uniform_int_distribution (whose algorithm is
// implementation-defined), so samplers replay bit-for-bit across toolchains.
//
// Substreams: substream_seed(seed, k) mixes (seed, k) through SplitMix64 and is
// used wherever independent streams are needed (signal/idler samplers,
// per-measurement noise).

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace kfh {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t k) {
  return splitmix64(splitmix64(seed) ^ splitmix64(k + 0x632be59bd9b4e019ULL));
}

/// Uniform integer in [0, bound), bound >= 1.
inline std::uint64_t uniform_below(Engine& eng, std::uint64_t bound) {
  // Reject the top partial bucket so every residue is equally likely.
  const std::uint64_t limit = -bound % bound;  // == 2^64 mod bound
  for (;;) {
    const std::uint64_t v = eng();
    if (v >= limit) return v % bound;
  }
}

/// Uniform random permutation of [first, first + n) by Fisher-Yates,
/// swapping from the back.
inline std::vector<std::uint32_t> random_permutation(Engine& eng, std::uint32_t n,
                                                     std::uint32_t first = 1) {
  std::vector<std::uint32_t> p(n);
  std::iota(p.begin(), p.end(), first);
  for (std::uint32_t i = n; i > 1; --i) {
    const auto j = static_cast<std::uint32_t>(uniform_below(eng, i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

}  // namespace kfh
