#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedsim {

// splitmix64 step; whitens seeds before feeding them to an engine.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from (run seed, subsystem tag, index).
// The tag is hashed with FNV-1a, so a stream's identity depends only on its
// own name: adding a new subsystem never shifts another subsystem's draws.
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = seed ^ h;
  std::uint64_t mixed = splitmix64(s);
  s ^= 0x9e3779b97f4a7c15ULL * (index + 1);
  return mixed ^ splitmix64(s);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view tag,
                                std::uint64_t index = 0) {
  return std::mt19937_64(stream_seed(seed, tag, index));
}

}  // namespace fedsim
