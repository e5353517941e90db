#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>

namespace md {

inline constexpr int kDescriptorBits = 512;

// 512-bit descriptor payload; bit j lives in word j / 64 at position j % 64.
using Bits512 = std::array<std::uint64_t, kDescriptorBits / 64>;

inline bool get_bit(const Bits512& b, int j) { return (b[j >> 6] >> (j & 63)) & 1U; }
inline void set_bit(Bits512& b, int j) { b[j >> 6] |= std::uint64_t{1} << (j & 63); }
inline void flip_bit(Bits512& b, int j) { b[j >> 6] ^= std::uint64_t{1} << (j & 63); }

inline int hamming(const Bits512& a, const Bits512& b) {
  int d = 0;
  for (std::size_t w = 0; w < a.size(); ++w) d += std::popcount(a[w] ^ b[w]);
  return d;
}

}  // namespace md
