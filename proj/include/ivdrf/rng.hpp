#pragma once

#include <cstdint>
#include <random>

namespace ivdrf {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent child seeds so that a
/// replicate's stream depends only on (master seed, counter).
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t counter = 0) {
  return mix_seed(mix_seed(master ^ mix_seed(stream + 0x51ed2701ULL)) + counter);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream = 0,
                    std::uint64_t counter = 0) {
  return Rng(derive_seed(master, stream, counter));
}

}  // namespace ivdrf
