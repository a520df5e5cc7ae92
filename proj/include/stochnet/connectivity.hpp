#pragma once

#include <cstdint>
#include <vector>

#include "stochnet/tensor.hpp"

namespace stochnet {

// Isotropic Gaussian connection-probability model over a k x k receptive
// field, calibrated so the mean connection probability is `connectivity`.
struct GaussianConnectivityModel {
  std::size_t kernel_size = 5;
  double sigma = 5.0 / 3.0;
  double connectivity = 0.75;

  // sigma = k/3 with the given target connectivity.
  static GaussianConnectivityModel preset(std::size_t kernel_size, double connectivity);

  void validate() const;
};

class ProbabilityMap {
 public:
  ProbabilityMap(std::size_t kernel_size, std::vector<double> p, double scale);

  std::size_t kernel_size() const noexcept { return k_; }
  int radius() const noexcept { return static_cast<int>(k_ / 2); }
  // Offsets (dy, dx) in [-radius, radius].
  double at(int dy, int dx) const;
  // Row-major over (ky, kx) in [0, k).
  double operator()(std::size_t ky, std::size_t kx) const { return p_[ky * k_ + kx]; }
  const std::vector<double>& values() const noexcept { return p_; }
  double scale() const noexcept { return scale_; }
  double mean() const;

 private:
  std::size_t k_;
  std::vector<double> p_;
  double scale_;
};

// p(dy,dx) = min(1, c * exp(-(dy^2+dx^2) / (2 sigma^2))), with c found by
// bisection so that the map's mean equals the target connectivity.
ProbabilityMap probability_map(const GaussianConnectivityModel& model);

// Binary gate congruent to a weight tensor.
class ConnectivityMask {
 public:
  ConnectivityMask() = default;
  ConnectivityMask(Shape shape, std::vector<std::uint8_t> bits, std::uint64_t seed);

  static ConnectivityMask ones(const Shape& shape, std::uint64_t seed = 0);

  const Shape& shape() const noexcept { return shape_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  std::size_t size() const noexcept { return bits_.size(); }
  std::size_t count() const noexcept;
  double realized_fraction() const noexcept;

  // Little-endian bitfield: bit i lives in byte i/8 at position i%8.
  std::vector<std::uint8_t> pack() const;
  static ConnectivityMask unpack(const Shape& shape, std::span<const std::uint8_t> packed,
                                 std::uint64_t seed);

  friend bool operator==(const ConnectivityMask&, const ConnectivityMask&) = default;

 private:
  Shape shape_;
  std::vector<std::uint8_t> bits_;
  std::uint64_t seed_ = 0;
};

// Mask of shape [out, in, k, k]; bit (oc,ic,ky,kx) is set iff the variate at
// that flat position of the keyed stream falls below p(ky,kx).
ConnectivityMask realize_conv_mask(const ProbabilityMap& pm, std::size_t out_channels,
                                   std::size_t in_channels, std::uint64_t seed);

// Mask of shape [out, in] with i.i.d. Bernoulli(connectivity) bits.
ConnectivityMask realize_dense_mask(std::size_t in_dim, std::size_t out_dim,
                                    double connectivity, std::uint64_t seed);

}  // namespace stochnet
