#pragma once

// Raw compute kernels behind the layers. Two interchangeable families:
//
//   serial::   direct loops, one accumulator per output, no threading. Kept
//              as the reference the optimized path is tested against.
//   parallel:: im2col + register-blocked GEMM, OpenMP over the batch. Each
//              output element is reduced in a fixed order that does not
//              depend on the thread count, so results are bit-identical for
//              any OMP_NUM_THREADS.
//
// All buffers are dense row-major. Weight arguments are the effective
// (already masked) weights.

#include <cstddef>
#include <span>

namespace stochnet::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_h() const { return (in_h + 2 * padding - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * padding - kernel) / stride + 1; }
  std::size_t patch() const { return in_channels * kernel * kernel; }
  std::size_t input_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t output_size() const { return batch * out_channels * out_h() * out_w(); }
  std::size_t weight_size() const { return out_channels * patch(); }
};

struct DenseGeometry {
  std::size_t batch = 1;
  std::size_t in_features = 1;
  std::size_t out_features = 1;
};

struct PoolGeometry {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t in_h = 2;
  std::size_t in_w = 2;

  std::size_t out_h() const { return in_h / 2; }
  std::size_t out_w() const { return in_w / 2; }
};

// An empty grad_x span skips the input-gradient computation.
#define STOCHNET_KERNEL_FAMILY                                                  \
  void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,      \
            const double* b, double* c);                                        \
  void conv2d_forward(const ConvGeometry& g, std::span<const double> x,        \
                      std::span<const double> w, std::span<const double> bias, \
                      std::span<double> y);                                     \
  void conv2d_backward(const ConvGeometry& g, std::span<const double> x,       \
                       std::span<const double> w,                               \
                       std::span<const double> grad_y,                          \
                       std::span<double> grad_x, std::span<double> grad_w,      \
                       std::span<double> grad_bias);                            \
  void dense_forward(const DenseGeometry& g, std::span<const double> x,        \
                     std::span<const double> w, std::span<const double> bias,  \
                     std::span<double> y);                                      \
  void dense_backward(const DenseGeometry& g, std::span<const double> x,       \
                      std::span<const double> w,                                \
                      std::span<const double> grad_y,                           \
                      std::span<double> grad_x, std::span<double> grad_w,       \
                      std::span<double> grad_bias);                             \
  void maxpool2_forward(const PoolGeometry& g, std::span<const double> x,      \
                        std::span<double> y, std::span<std::size_t> argmax);    \
  void maxpool2_backward(const PoolGeometry& g,                                 \
                         std::span<const std::size_t> argmax,                   \
                         std::span<const double> grad_y,                        \
                         std::span<double> grad_x);                             \
  void relu_forward(std::span<const double> x, std::span<double> y);           \
  void relu_backward(std::span<const double> x, std::span<const double> grad_y,\
                     std::span<double> grad_x);

namespace serial {
STOCHNET_KERNEL_FAMILY
}  // namespace serial

namespace parallel {
STOCHNET_KERNEL_FAMILY
}  // namespace parallel

#undef STOCHNET_KERNEL_FAMILY

}  // namespace stochnet::kernels
