#pragma once

#include <cstdint>
#include <random>

namespace cosbal {

// splitmix64 step; used to derive well-mixed seeds from (seed, index) pairs.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent substream for (seed, stream): replication loops index streams
// by replication number so results do not depend on scheduling.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = splitmix64(seed);
  s = splitmix64(s ^ (stream * 0xd1b54a32d192ed03ULL));
  return std::mt19937_64(s);
}

}  // namespace cosbal
