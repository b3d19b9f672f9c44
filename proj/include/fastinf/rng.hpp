#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fastinf {

// splitmix64; used both for seed derivation and cheap hashing.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Hierarchical seed split: every component hangs off one root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(root ^ splitmix64(stream));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  return derive_seed(root, h);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) { return std::mt19937_64(seed); }

// FNV-1a over raw bytes, for config/content digests.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 0x100000001b3ULL;
  return h;
}

template <typename T>
std::uint64_t fnv1a_value(const T& v, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(&v, sizeof(T), h);
}

}  // namespace fastinf
