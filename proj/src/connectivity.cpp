#include "stochnet/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stochnet/random.hpp"

namespace stochnet {

GaussianConnectivityModel GaussianConnectivityModel::preset(std::size_t kernel_size,
                                                            double connectivity) {
  GaussianConnectivityModel m{kernel_size, static_cast<double>(kernel_size) / 3.0,
                              connectivity};
  m.validate();
  return m;
}

void GaussianConnectivityModel::validate() const {
  if (kernel_size == 0 || kernel_size % 2 == 0)
    throw ValueError("kernel size must be odd and positive, got " +
                     std::to_string(kernel_size));
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValueError("sigma must be positive");
  if (!(connectivity > 0.0 && connectivity <= 1.0))
    throw ValueError("connectivity must lie in (0, 1], got " + std::to_string(connectivity));
}

ProbabilityMap::ProbabilityMap(std::size_t kernel_size, std::vector<double> p, double scale)
    : k_(kernel_size), p_(std::move(p)), scale_(scale) {
  if (p_.size() != k_ * k_) throw ShapeError("probability map must hold k*k entries");
}

double ProbabilityMap::at(int dy, int dx) const {
  const int r = radius();
  if (std::abs(dy) > r || std::abs(dx) > r) throw ShapeError("offset outside receptive field");
  return p_[static_cast<std::size_t>(dy + r) * k_ + static_cast<std::size_t>(dx + r)];
}

double ProbabilityMap::mean() const {
  double s = 0.0;
  for (double v : p_) s += v;
  return s / static_cast<double>(p_.size());
}

namespace {

constexpr int kBisectionIterations = 64;
constexpr double kBisectionTolerance = 1e-9;

double clamped_mean(const std::vector<double>& gauss, double c) {
  double s = 0.0;
  for (double g : gauss) s += std::min(1.0, c * g);
  return s / static_cast<double>(gauss.size());
}

}  // namespace

ProbabilityMap probability_map(const GaussianConnectivityModel& model) {
  model.validate();
  const std::size_t k = model.kernel_size;
  const int r = static_cast<int>(k / 2);
  const double two_var = 2.0 * model.sigma * model.sigma;

  std::vector<double> gauss(k * k);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      gauss[static_cast<std::size_t>(dy + r) * k + static_cast<std::size_t>(dx + r)] =
          std::exp(-static_cast<double>(dy * dy + dx * dx) / two_var);
  const double g_min = *std::min_element(gauss.begin(), gauss.end());
  const double rho = model.connectivity;

  double c;
  if (rho == 1.0) {
    c = 1.0 / g_min;  // every entry saturates
  } else {
    // mean(c) is continuous and non-decreasing; mean(rho) <= rho <= mean(rho / g_min).
    double lo = rho, hi = rho / g_min;
    c = 0.5 * (lo + hi);
    for (int it = 0; it < kBisectionIterations; ++it) {
      c = 0.5 * (lo + hi);
      const double m = clamped_mean(gauss, c);
      if (std::abs(m - rho) <= kBisectionTolerance) break;
      (m < rho ? lo : hi) = c;
    }
  }

  std::vector<double> p(k * k);
  // At rho = 1, c * g_min can round to just below 1.
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = rho == 1.0 ? 1.0 : std::min(1.0, c * gauss[i]);
  return ProbabilityMap(k, std::move(p), c);
}

ConnectivityMask::ConnectivityMask(Shape shape, std::vector<std::uint8_t> bits,
                                   std::uint64_t seed)
    : shape_(std::move(shape)), bits_(std::move(bits)), seed_(seed) {
  if (bits_.size() != shape_.numel())
    throw ShapeError("mask bit count does not match shape " + shape_.str());
  for (std::uint8_t b : bits_)
    if (b > 1) throw ValueError("mask bits must be 0 or 1");
}

ConnectivityMask ConnectivityMask::ones(const Shape& shape, std::uint64_t seed) {
  return ConnectivityMask(shape, std::vector<std::uint8_t>(shape.numel(), 1), seed);
}

std::size_t ConnectivityMask::count() const noexcept {
  std::size_t n = 0;
  for (std::uint8_t b : bits_) n += b;
  return n;
}

double ConnectivityMask::realized_fraction() const noexcept {
  return bits_.empty() ? 0.0
                       : static_cast<double>(count()) / static_cast<double>(bits_.size());
}

std::vector<std::uint8_t> ConnectivityMask::pack() const {
  std::vector<std::uint8_t> out((bits_.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits_.size(); ++i)
    out[i / 8] |= static_cast<std::uint8_t>(bits_[i] << (i % 8));
  return out;
}

ConnectivityMask ConnectivityMask::unpack(const Shape& shape,
                                          std::span<const std::uint8_t> packed,
                                          std::uint64_t seed) {
  const std::size_t n = shape.numel();
  if (packed.size() != (n + 7) / 8) throw ShapeError("packed mask length mismatch");
  std::vector<std::uint8_t> bits(n);
  for (std::size_t i = 0; i < n; ++i) bits[i] = (packed[i / 8] >> (i % 8)) & 1u;
  // Padding bits in the final byte must be clear.
  if (n % 8 != 0 && (packed.back() >> (n % 8)) != 0)
    throw ValueError("packed mask has non-zero padding bits");
  return ConnectivityMask(shape, std::move(bits), seed);
}

ConnectivityMask realize_conv_mask(const ProbabilityMap& pm, std::size_t out_channels,
                                   std::size_t in_channels, std::uint64_t seed) {
  const std::size_t k = pm.kernel_size();
  Shape shape{out_channels, in_channels, k, k};
  const CounterStream stream(seed);
  const auto taps = static_cast<std::ptrdiff_t>(shape.numel());
  std::vector<std::uint8_t> bits(shape.numel());
  const auto& p = pm.values();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < taps; ++i) {
    const auto flat = static_cast<std::uint64_t>(i);
    bits[flat] = stream.uniform(flat) < p[flat % (k * k)] ? 1 : 0;
  }
  return ConnectivityMask(std::move(shape), std::move(bits), seed);
}

ConnectivityMask realize_dense_mask(std::size_t in_dim, std::size_t out_dim,
                                    double connectivity, std::uint64_t seed) {
  if (!(connectivity > 0.0 && connectivity <= 1.0))
    throw ValueError("connectivity must lie in (0, 1], got " + std::to_string(connectivity));
  Shape shape{out_dim, in_dim};
  const CounterStream stream(seed);
  const auto n = static_cast<std::ptrdiff_t>(shape.numel());
  std::vector<std::uint8_t> bits(shape.numel());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto flat = static_cast<std::uint64_t>(i);
    bits[flat] = stream.uniform(flat) < connectivity ? 1 : 0;
  }
  return ConnectivityMask(std::move(shape), std::move(bits), seed);
}

}  // namespace stochnet
