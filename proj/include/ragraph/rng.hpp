#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ragraph {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t tag_hash(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Named sub-stream of a root seed. Streams for different (tag, a, b) are
/// independent, so work split per master node draws the same numbers no
/// matter how it is scheduled.
inline Rng substream(std::uint64_t root, std::string_view tag, std::uint64_t a = 0,
                     std::uint64_t b = 0) {
  std::uint64_t s = splitmix64(root ^ tag_hash(tag));
  s = splitmix64(s ^ splitmix64(a + 0x632BE59BD9B4E019ULL));
  s = splitmix64(s ^ splitmix64(b + 0x8CB92BA72F3D8DD7ULL));
  return Rng(s);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace ragraph
