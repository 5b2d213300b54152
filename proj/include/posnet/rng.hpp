#pragma once

#include <cstdint>

// Counter-based pseudo-random streams. Every draw is a pure function of
// (seed, stream coordinates), so sampling is reproducible across platforms
// and independent of scheduling: worker threads may consume draw indices in
// any order and still produce the same multiset of samples.

namespace posnet::rng {

// SplitMix64 finalizer; full-period bijective mixer on 64-bit words.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Hash a (seed, a, b, c) coordinate tuple into one 64-bit word by chaining
// the mixer; distinct tuples map to distinct-looking streams.
inline std::uint64_t hash4(std::uint64_t seed, std::uint64_t a,
                           std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = mix64(seed ^ 0x243f6a8885a308d3ull);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

// Uniform double in [0, 1) from the top 53 bits of a hashed word.
inline double uniform01(std::uint64_t word) {
  return static_cast<double>(word >> 11) * 0x1.0p-53;
}

// One uniform variate for stream coordinates (seed; a, b, c).
inline double uniform01(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                        std::uint64_t c) {
  return uniform01(hash4(seed, a, b, c));
}

}  // namespace posnet::rng
