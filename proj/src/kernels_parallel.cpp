#include <omp.h>

#include <algorithm>
#include <cstring>
#include <limits>
#include <vector>

#include "stochnet/kernels.hpp"

namespace stochnet::kernels::parallel {
namespace {

// GCC/Clang vector extension; lowers to whatever SIMD width the target has.
using v8d = double __attribute__((vector_size(64)));

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 32;
constexpr std::size_t kDepthBlock = 128;

inline v8d load(const double* p) {
  v8d v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store(double* p, v8d v) { std::memcpy(p, &v, sizeof(v)); }

// C[Rows x 32] (+)= A[Rows x k] * P[k x 32], P a packed contiguous panel.
template <std::size_t Rows>
void panel_kernel(std::size_t k, const double* a, std::size_t lda, const double* panel,
                  double* c, std::size_t ldc, bool accumulate) {
  v8d acc[Rows][4];
  for (std::size_t r = 0; r < Rows; ++r)
    for (std::size_t q = 0; q < 4; ++q) acc[r][q] = accumulate ? load(c + r * ldc + 8 * q) : v8d{};
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = panel + p * kColBlock;
    const v8d b0 = load(bp), b1 = load(bp + 8), b2 = load(bp + 16), b3 = load(bp + 24);
    for (std::size_t r = 0; r < Rows; ++r) {
      const double s = a[r * lda + p];
      acc[r][0] += s * b0;
      acc[r][1] += s * b1;
      acc[r][2] += s * b2;
      acc[r][3] += s * b3;
    }
  }
  for (std::size_t r = 0; r < Rows; ++r)
    for (std::size_t q = 0; q < 4; ++q) store(c + r * ldc + 8 * q, acc[r][q]);
}

std::vector<double>& panel_buffer(std::size_t size) {
  thread_local std::vector<double> buffer;
  if (buffer.size() < size) buffer.resize(size);
  return buffer;
}

// Rows [row_begin, row_end) of C = A * B. The reduction over p runs in
// kDepthBlock chunks in ascending order, the same for every element no matter
// which rows a caller hands out.
void gemm_rows(std::size_t row_begin, std::size_t row_end, std::size_t n,
               std::size_t k, const double* a, const double* b, double* c) {
  const std::size_t n_main = n - n % kColBlock;
  double* panel = panel_buffer(kDepthBlock * kColBlock).data();
  for (std::size_t j0 = 0; j0 < n_main; j0 += kColBlock) {
    for (std::size_t p0 = 0; p0 < k || p0 == 0; p0 += kDepthBlock) {
      const std::size_t depth = std::min(kDepthBlock, k - p0);
      for (std::size_t p = 0; p < depth; ++p)
        std::memcpy(panel + p * kColBlock, b + (p0 + p) * n + j0, kColBlock * sizeof(double));
      const bool accumulate = p0 > 0;
      std::size_t i = row_begin;
      for (; i + kRowBlock <= row_end; i += kRowBlock)
        panel_kernel<kRowBlock>(depth, a + i * k + p0, k, panel, c + i * n + j0, n, accumulate);
      for (; i < row_end; ++i)
        panel_kernel<1>(depth, a + i * k + p0, k, panel, c + i * n + j0, n, accumulate);
      if (k == 0) break;
    }
  }
  if (n_main == n) return;
  for (std::size_t i = row_begin; i < row_end; ++i) {
    double* ci = c + i * n;
    std::fill(ci + n_main, ci + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double s = a[i * k + p];
      const double* bp = b + p * n;
      for (std::size_t j = n_main; j < n; ++j) ci[j] += s * bp[j];
    }
  }
}

void gemm_serial(std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c) {
  gemm_rows(0, m, n, k, a, b, c);
}

void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

// col[(ic*k + ky)*k + kx][r*ow + s] = x[ic][r*stride + ky - pad][s*stride + kx - pad]
void im2col(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), kk = g.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
    const double* plane = x + ic * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < kk; ++ky) {
      for (std::size_t kx = 0; kx < kk; ++kx) {
        double* row = col + ((ic * kk + ky) * kk + kx) * oh * ow;
        for (std::size_t r = 0; r < oh; ++r) {
          const auto iy = static_cast<std::ptrdiff_t>(r * g.stride + ky) - pad;
          double* dst = row + r * ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(dst, dst + ow, 0.0);
            continue;
          }
          const double* src = plane + iy * g.in_w;
          for (std::size_t s = 0; s < ow; ++s) {
            const auto ix = static_cast<std::ptrdiff_t>(s * g.stride + kx) - pad;
            dst[s] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* x) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), kk = g.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  std::fill(x, x + g.in_channels * g.in_h * g.in_w, 0.0);
  for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
    double* plane = x + ic * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < kk; ++ky) {
      for (std::size_t kx = 0; kx < kk; ++kx) {
        const double* row = col + ((ic * kk + ky) * kk + kx) * oh * ow;
        for (std::size_t r = 0; r < oh; ++r) {
          const auto iy = static_cast<std::ptrdiff_t>(r * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          double* dst = plane + iy * g.in_w;
          for (std::size_t s = 0; s < ow; ++s) {
            const auto ix = static_cast<std::ptrdiff_t>(s * g.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) dst[ix] += row[r * ow + s];
          }
        }
      }
    }
  }
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c) {
  const auto blocks = static_cast<std::ptrdiff_t>((m + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t begin = static_cast<std::size_t>(blk) * kRowBlock;
    gemm_rows(begin, std::min(m, begin + kRowBlock), n, k, a, b, c);
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<const double> bias,
                    std::span<double> y) {
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t patch = g.patch();
  const std::size_t in_stride = g.in_channels * g.in_h * g.in_w;
  const std::size_t out_stride = g.out_channels * plane;
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel
  {
    std::vector<double> col(patch * plane);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < batch; ++n) {
      im2col(g, x.data() + n * in_stride, col.data());
      double* yn = y.data() + n * out_stride;
      gemm_serial(g.out_channels, plane, patch, w.data(), col.data(), yn);
      for (std::size_t oc = 0; oc < g.out_channels; ++oc)
        for (std::size_t p = 0; p < plane; ++p) yn[oc * plane + p] += bias[oc];
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> x,
                     std::span<const double> w, std::span<const double> grad_y,
                     std::span<double> grad_x, std::span<double> grad_w,
                     std::span<double> grad_bias) {
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t patch = g.patch();
  const std::size_t in_stride = g.in_channels * g.in_h * g.in_w;
  const std::size_t out_stride = g.out_channels * plane;
  const std::size_t wsize = g.weight_size();
  const bool want_x = !grad_x.empty();
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);

  std::vector<double> w_t(wsize);
  transpose(g.out_channels, patch, w.data(), w_t.data());

  // Per-sample partials of grad_w, stored transposed ([patch][oc]) and
  // reduced below in batch order.
  std::vector<double> partial_w(g.batch * wsize);
  std::vector<double> partial_b(g.batch * g.out_channels);
  std::vector<double> total_w_t(wsize);

#pragma omp parallel
  {
    std::vector<double> col(patch * plane);
    std::vector<double> gy_t(plane * g.out_channels);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < batch; ++n) {
      const double* gy = grad_y.data() + n * out_stride;
      im2col(g, x.data() + n * in_stride, col.data());
      transpose(g.out_channels, plane, gy, gy_t.data());
      gemm_serial(patch, g.out_channels, plane, col.data(), gy_t.data(),
                  partial_w.data() + n * wsize);
      for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) acc += gy[oc * plane + p];
        partial_b[n * g.out_channels + oc] = acc;
      }
      if (want_x) {
        gemm_serial(patch, plane, g.out_channels, w_t.data(), gy, col.data());
        col2im_add(g, col.data(), grad_x.data() + n * in_stride);
      }
    }

#pragma omp for schedule(static)
    for (std::ptrdiff_t e = 0; e < static_cast<std::ptrdiff_t>(wsize); ++e) {
      double acc = 0.0;
      for (std::size_t n = 0; n < g.batch; ++n) acc += partial_w[n * wsize + e];
      total_w_t[e] = acc;
    }
#pragma omp single
    transpose(patch, g.out_channels, total_w_t.data(), grad_w.data());
#pragma omp for schedule(static)
    for (std::ptrdiff_t oc = 0; oc < static_cast<std::ptrdiff_t>(g.out_channels); ++oc) {
      double acc = 0.0;
      for (std::size_t n = 0; n < g.batch; ++n) acc += partial_b[n * g.out_channels + oc];
      grad_bias[oc] = acc;
    }
  }
}

void dense_forward(const DenseGeometry& g, std::span<const double> x,
                   std::span<const double> w, std::span<const double> bias,
                   std::span<double> y) {
  std::vector<double> w_t(g.in_features * g.out_features);
  transpose(g.out_features, g.in_features, w.data(), w_t.data());
  gemm(g.batch, g.out_features, g.in_features, x.data(), w_t.data(), y.data());
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_features; ++o) y[n * g.out_features + o] += bias[o];
}

void dense_backward(const DenseGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<const double> grad_y,
                    std::span<double> grad_x, std::span<double> grad_w,
                    std::span<double> grad_bias) {
  std::vector<double> gy_t(g.batch * g.out_features);
  transpose(g.batch, g.out_features, grad_y.data(), gy_t.data());
  gemm(g.out_features, g.in_features, g.batch, gy_t.data(), x.data(), grad_w.data());
  for (std::size_t o = 0; o < g.out_features; ++o) {
    double acc = 0.0;
    for (std::size_t n = 0; n < g.batch; ++n) acc += gy_t[o * g.batch + n];
    grad_bias[o] = acc;
  }
  if (!grad_x.empty())
    gemm(g.batch, g.in_features, g.out_features, grad_y.data(), w.data(), grad_x.data());
}

void maxpool2_forward(const PoolGeometry& g, std::span<const double> x,
                      std::span<double> y, std::span<std::size_t> argmax) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto planes = static_cast<std::ptrdiff_t>(g.batch * g.channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pl = 0; pl < planes; ++pl) {
    const std::size_t plane = static_cast<std::size_t>(pl);
    const std::size_t in_base = plane * g.in_h * g.in_w;
    for (std::size_t r = 0; r < oh; ++r) {
      const double* top = x.data() + in_base + 2 * r * g.in_w;
      const double* bottom = top + g.in_w;
      for (std::size_t s = 0; s < ow; ++s) {
        std::size_t best_at = 2 * s;
        double best = top[2 * s];
        if (top[2 * s + 1] > best) best = top[best_at = 2 * s + 1];
        if (bottom[2 * s] > best) best = bottom[2 * s], best_at = g.in_w + 2 * s;
        if (bottom[2 * s + 1] > best) best = bottom[2 * s + 1], best_at = g.in_w + 2 * s + 1;
        const std::size_t out = (plane * oh + r) * ow + s;
        y[out] = best;
        argmax[out] = in_base + 2 * r * g.in_w + best_at;
      }
    }
  }
}

void maxpool2_backward(const PoolGeometry& g, std::span<const std::size_t> argmax,
                       std::span<const double> grad_y, std::span<double> grad_x) {
  const std::size_t out_plane = g.out_h() * g.out_w();
  const std::size_t in_plane = g.in_h * g.in_w;
  const auto planes = static_cast<std::ptrdiff_t>(g.batch * g.channels);
  // Windows do not overlap, so each plane is written by exactly one thread.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pl = 0; pl < planes; ++pl) {
    const std::size_t plane = static_cast<std::size_t>(pl);
    std::fill_n(grad_x.data() + plane * in_plane, in_plane, 0.0);
    for (std::size_t i = plane * out_plane; i < (plane + 1) * out_plane; ++i)
      grad_x[argmax[i]] += grad_y[i];
  }
}

void relu_forward(std::span<const double> x, std::span<double> y) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = x[i] < 0.0 ? 0.0 : x[i];  // NaN passes through
}

void relu_backward(std::span<const double> x, std::span<const double> grad_y,
                   std::span<double> grad_x) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) grad_x[i] = x[i] > 0.0 ? grad_y[i] : 0.0;
}

}  // namespace stochnet::kernels::parallel
