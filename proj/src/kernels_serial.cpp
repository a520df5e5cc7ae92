#include <algorithm>
#include <limits>

#include "stochnet/kernels.hpp"

namespace stochnet::kernels::serial {

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<const double> bias,
                    std::span<double> y) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), kk = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t s = 0; s < ow; ++s) {
          double acc = bias[oc];
          for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
            for (std::size_t ky = 0; ky < kk; ++ky) {
              const auto iy = static_cast<std::ptrdiff_t>(r * g.stride + ky) -
                              static_cast<std::ptrdiff_t>(g.padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < kk; ++kx) {
                const auto ix = static_cast<std::ptrdiff_t>(s * g.stride + kx) -
                                static_cast<std::ptrdiff_t>(g.padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                acc += w[((oc * g.in_channels + ic) * kk + ky) * kk + kx] *
                       x[((n * g.in_channels + ic) * g.in_h + iy) * g.in_w + ix];
              }
            }
          }
          y[((n * g.out_channels + oc) * oh + r) * ow + s] = acc;
        }
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> x,
                     std::span<const double> w, std::span<const double> grad_y,
                     std::span<double> grad_x, std::span<double> grad_w,
                     std::span<double> grad_bias) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), kk = g.kernel;
  std::fill(grad_w.begin(), grad_w.end(), 0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
  std::fill(grad_x.begin(), grad_x.end(), 0.0);
  const bool want_x = !grad_x.empty();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t s = 0; s < ow; ++s) {
          const double gy = grad_y[((n * g.out_channels + oc) * oh + r) * ow + s];
          grad_bias[oc] += gy;
          for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
            for (std::size_t ky = 0; ky < kk; ++ky) {
              const auto iy = static_cast<std::ptrdiff_t>(r * g.stride + ky) -
                              static_cast<std::ptrdiff_t>(g.padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < kk; ++kx) {
                const auto ix = static_cast<std::ptrdiff_t>(s * g.stride + kx) -
                                static_cast<std::ptrdiff_t>(g.padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                const std::size_t wi = ((oc * g.in_channels + ic) * kk + ky) * kk + kx;
                const std::size_t xi =
                    ((n * g.in_channels + ic) * g.in_h + iy) * g.in_w + ix;
                grad_w[wi] += gy * x[xi];
                if (want_x) grad_x[xi] += gy * w[wi];
              }
            }
          }
        }
      }
    }
  }
}

void dense_forward(const DenseGeometry& g, std::span<const double> x,
                   std::span<const double> w, std::span<const double> bias,
                   std::span<double> y) {
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out_features; ++o) {
      double acc = bias[o];
      for (std::size_t i = 0; i < g.in_features; ++i)
        acc += w[o * g.in_features + i] * x[n * g.in_features + i];
      y[n * g.out_features + o] = acc;
    }
  }
}

void dense_backward(const DenseGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<const double> grad_y,
                    std::span<double> grad_x, std::span<double> grad_w,
                    std::span<double> grad_bias) {
  for (std::size_t o = 0; o < g.out_features; ++o) {
    double gb = 0.0;
    for (std::size_t n = 0; n < g.batch; ++n) gb += grad_y[n * g.out_features + o];
    grad_bias[o] = gb;
    for (std::size_t i = 0; i < g.in_features; ++i) {
      double acc = 0.0;
      for (std::size_t n = 0; n < g.batch; ++n)
        acc += grad_y[n * g.out_features + o] * x[n * g.in_features + i];
      grad_w[o * g.in_features + i] = acc;
    }
  }
  if (grad_x.empty()) return;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t i = 0; i < g.in_features; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < g.out_features; ++o)
        acc += grad_y[n * g.out_features + o] * w[o * g.in_features + i];
      grad_x[n * g.in_features + i] = acc;
    }
  }
}

void maxpool2_forward(const PoolGeometry& g, std::span<const double> x,
                      std::span<double> y, std::span<std::size_t> argmax) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t plane = 0; plane < g.batch * g.channels; ++plane) {
    const std::size_t in_base = plane * g.in_h * g.in_w;
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t s = 0; s < ow; ++s) {
        // Row-major scan; strict > keeps the first maximum on ties.
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_at = in_base + 2 * r * g.in_w + 2 * s;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t at = in_base + (2 * r + dy) * g.in_w + 2 * s + dx;
            if (x[at] > best) {
              best = x[at];
              best_at = at;
            }
          }
        }
        const std::size_t out = (plane * oh + r) * ow + s;
        y[out] = best;
        argmax[out] = best_at;
      }
    }
  }
}

void maxpool2_backward(const PoolGeometry& g, std::span<const std::size_t> argmax,
                       std::span<const double> grad_y, std::span<double> grad_x) {
  (void)g;
  std::fill(grad_x.begin(), grad_x.end(), 0.0);
  for (std::size_t i = 0; i < grad_y.size(); ++i) grad_x[argmax[i]] += grad_y[i];
}

void relu_forward(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] < 0.0 ? 0.0 : x[i];  // NaN passes through
}

void relu_backward(std::span<const double> x, std::span<const double> grad_y,
                   std::span<double> grad_x) {
  for (std::size_t i = 0; i < x.size(); ++i) grad_x[i] = x[i] > 0.0 ? grad_y[i] : 0.0;
}

}  // namespace stochnet::kernels::serial
