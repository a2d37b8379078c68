#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace consmrf {

using Rng = std::mt19937_64;

namespace seed_tag {
inline constexpr std::uint64_t kInit = 0x696e6974ULL;
inline constexpr std::uint64_t kConsensus = 0x7a7a7a7aULL;
inline constexpr std::uint64_t kTrain = 0x74726eULL;
inline constexpr std::uint64_t kLoss = 0x6c6f7373ULL;
inline constexpr std::uint64_t kAuxInit = 0x617578ULL;
inline constexpr std::uint64_t kEval = 0x6576616cULL;
inline constexpr std::uint64_t kSplit = 0x73706c74ULL;
inline constexpr std::uint64_t kFold = 0x666f6c64ULL;
}  // namespace seed_tag

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mixes a base seed with a sequence of tags into an independent stream seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(base, tags));
}

}  // namespace consmrf
