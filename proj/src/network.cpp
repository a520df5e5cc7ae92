#include "stochnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "stochnet/random.hpp"

namespace stochnet {

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.shape().rank() != 2) throw ShapeError("logits must be [n, classes]");
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != n) throw ShapeError("label count does not match batch size");
  LossResult out{0.0, Tensor(logits.shape())};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes)
      throw ValueError("label " + std::to_string(label) + " outside [0, " +
                       std::to_string(classes) + ")");
    const double* row = logits.data().data() + i * classes;
    double* grow = out.grad_logits.data().data() + i * classes;
    const double m = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - m);
    const double log_z = std::log(z);
    out.loss += (log_z - (row[label] - m)) * inv_n;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(row[c] - m - log_z);
      grow[c] = (p - (static_cast<std::size_t>(label) == c ? 1.0 : 0.0)) * inv_n;
    }
  }
  return out;
}

Network::Network(Shape input_chw, std::size_t num_classes, std::vector<Layer> layers,
                 double connectivity, std::uint64_t seed)
    : input_chw_(std::move(input_chw)),
      num_classes_(num_classes),
      layers_(std::move(layers)),
      connectivity_(connectivity),
      seed_(seed) {
  if (input_chw_.rank() != 3) throw ShapeError("network input must be [c, h, w]");
  if (layers_.empty()) throw ShapeError("network needs at least one layer");
  const auto chain = shape_chain(1);
  const Shape& last = chain.back();
  if (last.rank() != 2 || last[1] != num_classes_)
    throw ShapeError("network output " + last.str() + " does not end in " +
                     std::to_string(num_classes_) + " classes");
}

std::vector<Shape> Network::shape_chain(std::size_t batch) const {
  std::vector<Shape> chain;
  Shape s{batch, input_chw_[0], input_chw_[1], input_chw_[2]};
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      s = output_shape(layers_[i], s);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" + kind_name(kind_of(layers_[i])) +
                       "): " + e.what());
    }
    chain.push_back(s);
  }
  return chain;
}

void Network::check_input(const Tensor& x) const {
  const Shape& s = x.shape();
  if (s.rank() != 4 || s[1] != input_chw_[0] || s[2] != input_chw_[1] || s[3] != input_chw_[2])
    throw ShapeError("network expects [n," + std::to_string(input_chw_[0]) + "," +
                     std::to_string(input_chw_[1]) + "," + std::to_string(input_chw_[2]) +
                     "], got " + s.str());
}

namespace {

Tensor run_layer(const Layer& layer, const Tensor& a, std::vector<std::size_t>* argmax,
                 Backend backend) {
  return std::visit(
      [&](const auto& l) -> Tensor {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, MaxPool2>) return l.forward(a, argmax, backend);
        else if constexpr (std::is_same_v<L, Flatten>) return l.forward(a);
        else return l.forward(a, backend);
      },
      layer);
}

}  // namespace

Tensor Network::forward(const Tensor& x) const { return forward_range(x, 0, layers_.size()); }

Tensor Network::forward_range(const Tensor& x, std::size_t begin, std::size_t end) const {
  if (begin > end || end > layers_.size()) throw ShapeError("invalid layer range");
  if (begin == 0) check_input(x);
  if (begin == end) return x;
  Tensor a = run_layer(layers_[begin], x, nullptr, backend_);
  for (std::size_t i = begin + 1; i < end; ++i) a = run_layer(layers_[i], a, nullptr, backend_);
  return a;
}

ForwardTrace Network::forward_trace(const Tensor& x, std::size_t first) const {
  if (first >= layers_.size()) throw ShapeError("trace must start inside the network");
  if (first == 0) check_input(x);
  ForwardTrace trace;
  trace.first = first;
  trace.inputs.resize(layers_.size());
  trace.argmax.resize(layers_.size());
  trace.inputs[first] = x;
  for (std::size_t i = first; i < layers_.size(); ++i) {
    Tensor next = run_layer(layers_[i], trace.inputs[i], &trace.argmax[i], backend_);
    if (i + 1 < layers_.size())
      trace.inputs[i + 1] = std::move(next);
    else
      trace.logits = std::move(next);
  }
  return trace;
}

std::size_t Network::trainable_begin() const noexcept {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const MaskedParameters* p = parameters_of(layers_[i]);
    if (p && !p->frozen()) return i;
  }
  return layers_.size();
}

Gradients Network::backward(const ForwardTrace& trace, const Tensor& grad_logits,
                            BackwardOptions options) const {
  if (trace.inputs.size() != layers_.size()) throw ShapeError("trace does not match network");
  if (grad_logits.shape() != trace.logits.shape())
    throw ShapeError("grad_logits shape " + grad_logits.shape().str() + " does not match logits");

  Gradients grads;
  grads.layers.resize(layers_.size());

  if (options.to_input && trace.first != 0)
    throw ShapeError("input gradient needs a trace of the whole network");
  std::size_t lowest = 0;
  if (!options.to_input) {
    lowest = std::max(trainable_begin(), trace.first);
    if (lowest == layers_.size()) return grads;
  }

  Tensor grad = grad_logits;
  for (std::size_t i = layers_.size(); i-- > lowest;) {
    const bool need_input = options.to_input || i > lowest;
    const Tensor& x = trace.inputs[i];
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, SparseConvLayer> || std::is_same_v<L, SparseDenseLayer>) {
            LayerBackward lb = l.backward(x, grad, need_input, backend_);
            if (!l.params().frozen()) grads.layers[i] = std::move(lb.params);
            grad = std::move(lb.grad_input);
          } else if (need_input) {
            if constexpr (std::is_same_v<L, MaxPool2>) grad = l.backward(x, trace.argmax[i], grad, backend_);
            else if constexpr (std::is_same_v<L, Relu>) grad = l.backward(x, grad, backend_);
            else grad = l.backward(x, grad);
          }
        },
        layers_[i]);
  }
  if (options.to_input) grads.input = std::move(grad);
  return grads;
}

std::vector<std::size_t> Network::conv_layer_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (kind_of(layers_[i]) == LayerKind::kConv) out.push_back(i);
  return out;
}

std::vector<std::size_t> Network::dense_layer_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (kind_of(layers_[i]) == LayerKind::kDense) out.push_back(i);
  return out;
}

MaskedParameters init_masked_parameters(ConnectivityMask mask, double connectivity,
                                        std::uint64_t init_seed) {
  const Shape& s = mask.shape();
  const std::size_t fan_out_units = s[0];
  const std::size_t fan_in_units = s[1];
  const auto surviving = static_cast<double>(mask.count());
  const double fan_in = surviving / static_cast<double>(fan_out_units);
  const double fan_out = surviving / static_cast<double>(fan_in_units);
  const double limit = surviving > 0 ? std::sqrt(6.0 / (fan_in + fan_out)) : 0.0;

  Tensor w(s);
  const CounterStream stream(init_seed);
  for (std::size_t i = 0; i < w.numel(); ++i)
    w[i] = mask[i] ? (2.0 * stream.uniform(i) - 1.0) * limit : 0.0;
  Tensor bias(Shape{s[0]});
  return MaskedParameters(std::move(w), std::move(bias), std::move(mask), connectivity);
}

SparseConvLayer make_sparse_conv(std::size_t in_channels, std::size_t out_channels,
                                 std::size_t kernel, double connectivity,
                                 std::uint64_t mask_seed, std::uint64_t init_seed) {
  const auto pm = probability_map(GaussianConnectivityModel::preset(kernel, connectivity));
  auto mask = realize_conv_mask(pm, out_channels, in_channels, mask_seed);
  return SparseConvLayer(init_masked_parameters(std::move(mask), connectivity, init_seed), 1,
                         kernel / 2);
}

SparseDenseLayer make_sparse_dense(std::size_t in_features, std::size_t out_features,
                                   double connectivity, std::uint64_t mask_seed,
                                   std::uint64_t init_seed) {
  auto mask = realize_dense_mask(in_features, out_features, connectivity, mask_seed);
  return SparseDenseLayer(init_masked_parameters(std::move(mask), connectivity, init_seed));
}

Network build_paper_architecture(std::size_t in_channels, std::size_t input_hw,
                                 std::size_t num_classes, double connectivity,
                                 std::uint64_t seed) {
  if (input_hw == 0 || input_hw % 8 != 0)
    throw ShapeError("input size must be a positive multiple of 8, got " +
                     std::to_string(input_hw));
  if (in_channels == 0 || num_classes == 0) throw ShapeError("channels and classes must be >= 1");
  constexpr std::size_t kKernel = 5;
  constexpr std::size_t kFilters[3] = {32, 32, 64};
  constexpr std::size_t kHidden = 64;

  // Masked layer j draws its mask from key 2j and its init from key 2j+1.
  const CounterStream root(seed);
  std::size_t ordinal = 0;
  auto mask_seed = [&] { return root.bits(2 * ordinal); };
  auto init_seed = [&] { return root.bits(2 * ordinal + 1); };

  std::vector<Layer> layers;
  std::size_t channels = in_channels;
  for (std::size_t f : kFilters) {
    layers.emplace_back(make_sparse_conv(channels, f, kKernel, connectivity, mask_seed(), init_seed()));
    ++ordinal;
    layers.emplace_back(Relu{});
    layers.emplace_back(MaxPool2{});
    channels = f;
  }
  const std::size_t reduced = input_hw / 8;
  layers.emplace_back(Flatten{});
  layers.emplace_back(
      make_sparse_dense(channels * reduced * reduced, kHidden, connectivity, mask_seed(), init_seed()));
  ++ordinal;
  layers.emplace_back(Relu{});
  layers.emplace_back(make_sparse_dense(kHidden, num_classes, connectivity, mask_seed(), init_seed()));

  return Network(Shape{in_channels, input_hw, input_hw}, num_classes, std::move(layers),
                 connectivity, seed);
}

}  // namespace stochnet
