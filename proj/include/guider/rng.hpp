#ifndef GUIDER_RNG_HPP
#define GUIDER_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace guider {

// Counter-based seed derivation: every stage gets an independent stream
// from the single root seed, so stages are reproducible in isolation.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stage,
                                 std::uint64_t counter = 0) {
  std::uint64_t h = root;
  for (char c : stage) h = splitmix64(h ^ static_cast<std::uint64_t>(c));
  return splitmix64(h ^ counter);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t root, std::string_view stage,
                    std::uint64_t counter = 0) {
  return Rng(derive_seed(root, stage, counter));
}

}  // namespace guider

#endif
