#pragma once

#include <cstdint>

namespace stochnet {

// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Counter-addressable SplitMix64 stream: at(i) is exactly the (i+1)-th output
// of a sequential SplitMix64 seeded with `seed`, so any variate can be
// produced without generating its predecessors.
class CounterStream {
 public:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

  constexpr explicit CounterStream(std::uint64_t seed) noexcept : seed_(seed) {}

  constexpr std::uint64_t seed() const noexcept { return seed_; }

  constexpr std::uint64_t bits(std::uint64_t index) const noexcept {
    return mix64(seed_ + (index + 1) * kGamma);
  }

  // Uniform in [0, 1): top 53 bits of the mixed word scaled by 2^-53.
  constexpr double uniform(std::uint64_t index) const noexcept {
    return static_cast<double>(bits(index) >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound) by multiply-high.
  constexpr std::uint64_t below(std::uint64_t index, std::uint64_t bound) const noexcept {
    return mul_high(bits(index), bound);
  }

  // Independent child stream; used to give each layer / purpose its own key.
  constexpr CounterStream child(std::uint64_t tag) const noexcept {
    return CounterStream(bits(tag));
  }

 private:
  static constexpr std::uint64_t mul_high(std::uint64_t a, std::uint64_t b) noexcept {
    const std::uint64_t a_lo = a & 0xffffffffu, a_hi = a >> 32;
    const std::uint64_t b_lo = b & 0xffffffffu, b_hi = b >> 32;
    const std::uint64_t lo_lo = a_lo * b_lo;
    const std::uint64_t hi_lo = a_hi * b_lo;
    const std::uint64_t lo_hi = a_lo * b_hi;
    const std::uint64_t cross = (lo_lo >> 32) + (hi_lo & 0xffffffffu) + lo_hi;
    return a_hi * b_hi + (hi_lo >> 32) + (cross >> 32);
  }

  std::uint64_t seed_;
};

}  // namespace stochnet
