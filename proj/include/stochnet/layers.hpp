#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "stochnet/connectivity.hpp"
#include "stochnet/tensor.hpp"

namespace stochnet {

enum class Backend { kSerial, kParallel };

// Weights, biases and the mask gating them. Every mutation re-applies the
// mask, so a masked-out weight is exactly 0.0 at all times.
class MaskedParameters {
 public:
  MaskedParameters() = default;
  MaskedParameters(Tensor weights, Tensor bias, ConnectivityMask mask, double connectivity);

  const Tensor& weights() const noexcept { return weights_; }
  const Tensor& bias() const noexcept { return bias_; }
  const ConnectivityMask& mask() const noexcept { return mask_; }
  double connectivity() const noexcept { return connectivity_; }
  bool frozen() const noexcept { return frozen_; }
  void set_frozen(bool frozen) noexcept { frozen_ = frozen; }

  // Connection weights only; biases are never masked.
  std::size_t param_count() const noexcept { return weights_.numel(); }
  std::size_t surviving_count() const noexcept { return mask_.count(); }

  // W <- (W + dW) * mask, b <- b + db.
  void update(std::span<const double> weight_delta, std::span<const double> bias_delta);

  friend bool operator==(const MaskedParameters&, const MaskedParameters&) = default;

 private:
  Tensor weights_;
  Tensor bias_;
  ConnectivityMask mask_;
  double connectivity_ = 1.0;
  bool frozen_ = false;
};

struct ParamGrads {
  Tensor weights;
  Tensor bias;
};

struct LayerBackward {
  Tensor grad_input;                 // empty shape when not requested
  std::optional<ParamGrads> params;  // masked-out entries are exactly 0
};

class SparseConvLayer {
 public:
  SparseConvLayer(MaskedParameters params, std::size_t stride, std::size_t padding);

  std::size_t out_channels() const { return params_.weights().dim(0); }
  std::size_t in_channels() const { return params_.weights().dim(1); }
  std::size_t kernel_size() const { return params_.weights().dim(2); }
  std::size_t stride() const noexcept { return stride_; }
  std::size_t padding() const noexcept { return padding_; }

  MaskedParameters& params() noexcept { return params_; }
  const MaskedParameters& params() const noexcept { return params_; }

  Shape output_shape(const Shape& input) const;
  Tensor forward(const Tensor& x, Backend backend = Backend::kParallel) const;
  LayerBackward backward(const Tensor& x, const Tensor& grad_out, bool want_input_grad,
                         Backend backend = Backend::kParallel) const;

  friend bool operator==(const SparseConvLayer&, const SparseConvLayer&) = default;

 private:
  MaskedParameters params_;
  std::size_t stride_ = 1;
  std::size_t padding_ = 0;
};

class SparseDenseLayer {
 public:
  explicit SparseDenseLayer(MaskedParameters params);

  std::size_t out_features() const { return params_.weights().dim(0); }
  std::size_t in_features() const { return params_.weights().dim(1); }

  MaskedParameters& params() noexcept { return params_; }
  const MaskedParameters& params() const noexcept { return params_; }

  Shape output_shape(const Shape& input) const;
  Tensor forward(const Tensor& x, Backend backend = Backend::kParallel) const;
  LayerBackward backward(const Tensor& x, const Tensor& grad_out, bool want_input_grad,
                         Backend backend = Backend::kParallel) const;

  friend bool operator==(const SparseDenseLayer&, const SparseDenseLayer&) = default;

 private:
  MaskedParameters params_;
};

// 2x2 max pooling, stride 2. Ties go to the first maximum in row-major scan.
struct MaxPool2 {
  Shape output_shape(const Shape& input) const;
  Tensor forward(const Tensor& x, std::vector<std::size_t>* argmax = nullptr,
                 Backend backend = Backend::kParallel) const;
  Tensor backward(const Tensor& x, std::span<const std::size_t> argmax,
                  const Tensor& grad_out, Backend backend = Backend::kParallel) const;
  friend bool operator==(const MaxPool2&, const MaxPool2&) = default;
};

// max(0, x); the subgradient at exactly 0 is 0.
struct Relu {
  Shape output_shape(const Shape& input) const { return input; }
  Tensor forward(const Tensor& x, Backend backend = Backend::kParallel) const;
  Tensor backward(const Tensor& x, const Tensor& grad_out,
                  Backend backend = Backend::kParallel) const;
  friend bool operator==(const Relu&, const Relu&) = default;
};

// [n, c, h, w] -> [n, c*h*w].
struct Flatten {
  Shape output_shape(const Shape& input) const;
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& grad_out) const;
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

using Layer = std::variant<SparseConvLayer, MaxPool2, Relu, Flatten, SparseDenseLayer>;

enum class LayerKind : std::uint8_t { kConv = 1, kMaxPool2 = 2, kRelu = 3, kFlatten = 4, kDense = 5 };

LayerKind kind_of(const Layer& layer) noexcept;
const char* kind_name(LayerKind kind) noexcept;
Shape output_shape(const Layer& layer, const Shape& input);
// nullptr for parameter-free layers.
const MaskedParameters* parameters_of(const Layer& layer) noexcept;
MaskedParameters* parameters_of(Layer& layer) noexcept;

}  // namespace stochnet
