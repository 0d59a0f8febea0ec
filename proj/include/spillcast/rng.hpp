#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace spillcast {

// Deterministic randomness helpers. mt19937_64 output is bit-exact across
// platforms, but the <random> distribution classes are not, so every draw
// below is derived from raw generator bits.

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ b);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(a, b) ^ c);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

// Index in [0, n). Modulo bias is below n / 2^64 and irrelevant at the
// sample counts used here; what matters is that it is reproducible.
inline std::size_t uniform_index(std::mt19937_64& g, std::size_t n) {
  return static_cast<std::size_t>(g() % n);
}

template <typename T>
void shuffle_vec(std::vector<T>& v, std::mt19937_64& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(g, i)]);
  }
}

}  // namespace spillcast
