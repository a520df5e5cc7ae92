#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "stochnet/layers.hpp"

namespace stochnet {

struct LossResult {
  double loss = 0.0;
  Tensor grad_logits;  // (softmax - onehot) / n
};

// Mean softmax cross-entropy with max-subtraction.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Activations kept from a forward pass for the backward pass.
struct ForwardTrace {
  std::size_t first = 0;                          // first layer that was run
  std::vector<Tensor> inputs;                     // inputs[i] feeds layer i (i >= first)
  std::vector<std::vector<std::size_t>> argmax;   // pooling routes, per layer
  Tensor logits;
};

struct Gradients {
  std::vector<std::optional<ParamGrads>> layers;  // nullopt: no params, frozen, or not reached
  std::optional<Tensor> input;
};

struct BackwardOptions {
  // Propagate all the way to the network input. When false, the pass stops
  // at the lowest trainable layer since nothing below it needs gradients.
  bool to_input = false;
};

class Network {
 public:
  // `input_chw` is the per-sample shape [c, h, w].
  Network(Shape input_chw, std::size_t num_classes, std::vector<Layer> layers,
          double connectivity = 1.0, std::uint64_t seed = 0);

  const Shape& input_shape() const noexcept { return input_chw_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  double connectivity() const noexcept { return connectivity_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  Backend backend() const noexcept { return backend_; }
  void set_backend(Backend b) noexcept { backend_ = b; }

  // Per-layer output shapes for a batch of `batch` samples.
  std::vector<Shape> shape_chain(std::size_t batch) const;

  Tensor forward(const Tensor& x) const;
  // Runs layers [begin, end) on `x`, the input of layer `begin`.
  Tensor forward_range(const Tensor& x, std::size_t begin, std::size_t end) const;
  // Trace of layers [first, size()); `x` is the input of layer `first`.
  ForwardTrace forward_trace(const Tensor& x, std::size_t first = 0) const;
  Gradients backward(const ForwardTrace& trace, const Tensor& grad_logits,
                     BackwardOptions options = {}) const;

  // Index of the lowest unfrozen parameterised layer; size() if none. Layers
  // below it are a fixed function of the input.
  std::size_t trainable_begin() const noexcept;

  std::vector<std::size_t> conv_layer_indices() const;
  std::vector<std::size_t> dense_layer_indices() const;

  friend bool operator==(const Network& a, const Network& b) {
    return a.input_chw_ == b.input_chw_ && a.num_classes_ == b.num_classes_ &&
           a.layers_ == b.layers_ && a.connectivity_ == b.connectivity_ && a.seed_ == b.seed_;
  }

 private:
  void check_input(const Tensor& x) const;

  Shape input_chw_;
  std::size_t num_classes_;
  std::vector<Layer> layers_;
  double connectivity_;
  std::uint64_t seed_;
  Backend backend_ = Backend::kParallel;
};

// Uniform in [-a, a], a = sqrt(6 / (fan_in + fan_out)) with fans counted over
// surviving mask bits only; masked weights stay 0, biases start at 0.
MaskedParameters init_masked_parameters(ConnectivityMask mask, double connectivity,
                                        std::uint64_t init_seed);

SparseConvLayer make_sparse_conv(std::size_t in_channels, std::size_t out_channels,
                                 std::size_t kernel, double connectivity,
                                 std::uint64_t mask_seed, std::uint64_t init_seed);
SparseDenseLayer make_sparse_dense(std::size_t in_features, std::size_t out_features,
                                   double connectivity, std::uint64_t mask_seed,
                                   std::uint64_t init_seed);

// conv5x5(in->32) relu pool, conv5x5(32->32) relu pool, conv5x5(32->64) relu
// pool, flatten, dense(->64) relu, dense(64->classes). Same padding, stride 1.
Network build_paper_architecture(std::size_t in_channels, std::size_t input_hw,
                                 std::size_t num_classes, double connectivity,
                                 std::uint64_t seed);

}  // namespace stochnet
