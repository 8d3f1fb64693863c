#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace attobeat {

// Counter-based seed splitting: every random stream is addressed by the
// scenario seed plus a tuple of integer coordinates, so results do not
// depend on the order in which workers pick up units.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class Stream : std::uint64_t {
  kVmiFrame = 1,
  kScanNoise = 2,
  kFringeNoise = 3,
  kPhaseNoise = 4,
  kDrift = 5,
  kTest = 99,
};

inline std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                 std::initializer_list<std::uint64_t> coords = {}) {
  std::uint64_t h = splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(stream)));
  for (std::uint64_t c : coords) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

inline std::mt19937_64 make_rng(std::uint64_t master, Stream stream,
                                std::initializer_list<std::uint64_t> coords = {}) {
  return std::mt19937_64(derive_seed(master, stream, coords));
}

}  // namespace attobeat
