#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace expertroute {

inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

/// 64-bit FNV-1a over raw bytes. `state` allows incremental hashing.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t state = kFnvOffsetBasis) noexcept {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= kFnvPrime;
  }
  return state;
}

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                             std::uint64_t state = kFnvOffsetBasis) noexcept {
  for (std::uint8_t c : bytes) {
    state ^= c;
    state *= kFnvPrime;
  }
  return state;
}

/// SplitMix64 finalizer; used to derive independent streams from a seed.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace expertroute
