#include "stochnet/layers.hpp"

#include <string>

#include "stochnet/kernels.hpp"

namespace stochnet {

MaskedParameters::MaskedParameters(Tensor weights, Tensor bias, ConnectivityMask mask,
                                   double connectivity)
    : weights_(std::move(weights)),
      bias_(std::move(bias)),
      mask_(std::move(mask)),
      connectivity_(connectivity) {
  if (mask_.shape() != weights_.shape())
    throw ShapeError("mask shape " + mask_.shape().str() + " does not match weights " +
                     weights_.shape().str());
  if (bias_.shape().rank() != 1 || bias_.dim(0) != weights_.dim(0))
    throw ShapeError("bias must be [" + std::to_string(weights_.dim(0)) + "]");
  auto w = weights_.data();
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!mask_[i]) w[i] = 0.0;
}

void MaskedParameters::update(std::span<const double> weight_delta,
                              std::span<const double> bias_delta) {
  auto w = weights_.data();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = mask_[i] ? w[i] + weight_delta[i] : 0.0;
  auto b = bias_.data();
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += bias_delta[i];
}

namespace {

void mask_gradient(const ConnectivityMask& mask, Tensor& grad) {
  auto g = grad.data();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!mask[i]) g[i] = 0.0;
}

void require_rank(const Shape& s, std::size_t rank, const char* layer) {
  if (s.rank() != rank)
    throw ShapeError(std::string(layer) + " expects a rank-" + std::to_string(rank) +
                     " input, got " + s.str());
}

}  // namespace

SparseConvLayer::SparseConvLayer(MaskedParameters params, std::size_t stride,
                                 std::size_t padding)
    : params_(std::move(params)), stride_(stride), padding_(padding) {
  const Shape& ws = params_.weights().shape();
  if (ws.rank() != 4 || ws[2] != ws[3])
    throw ShapeError("conv weights must be [oc, ic, k, k], got " + ws.str());
  if (stride_ == 0) throw ValueError("conv stride must be >= 1");
}

Shape SparseConvLayer::output_shape(const Shape& input) const {
  require_rank(input, 4, "conv");
  if (input[1] != in_channels())
    throw ShapeError("conv expects " + std::to_string(in_channels()) + " input channels, got " +
                     input.str());
  const std::size_t k = kernel_size();
  if (input[2] + 2 * padding_ < k || input[3] + 2 * padding_ < k)
    throw ShapeError("conv input " + input.str() + " smaller than kernel");
  return Shape{input[0], out_channels(), (input[2] + 2 * padding_ - k) / stride_ + 1,
               (input[3] + 2 * padding_ - k) / stride_ + 1};
}

namespace {

kernels::ConvGeometry geometry(const SparseConvLayer& l, const Shape& in) {
  return {in[0], in[1], in[2], in[3], l.out_channels(), l.kernel_size(), l.stride(),
          l.padding()};
}

}  // namespace

Tensor SparseConvLayer::forward(const Tensor& x, Backend backend) const {
  Tensor y(output_shape(x.shape()));
  const auto g = geometry(*this, x.shape());
  if (backend == Backend::kSerial)
    kernels::serial::conv2d_forward(g, x.data(), params_.weights().data(),
                                    params_.bias().data(), y.data());
  else
    kernels::parallel::conv2d_forward(g, x.data(), params_.weights().data(),
                                      params_.bias().data(), y.data());
  return y;
}

LayerBackward SparseConvLayer::backward(const Tensor& x, const Tensor& grad_out,
                                        bool want_input_grad, Backend backend) const {
  if (grad_out.shape() != output_shape(x.shape()))
    throw ShapeError("conv grad_out shape " + grad_out.shape().str() + " does not match output");
  const auto g = geometry(*this, x.shape());
  LayerBackward out;
  ParamGrads pg{Tensor(params_.weights().shape()), Tensor(params_.bias().shape())};
  std::span<double> gx;
  if (want_input_grad) {
    out.grad_input = Tensor(x.shape());
    gx = out.grad_input.data();
  }
  if (backend == Backend::kSerial)
    kernels::serial::conv2d_backward(g, x.data(), params_.weights().data(), grad_out.data(), gx,
                                     pg.weights.data(), pg.bias.data());
  else
    kernels::parallel::conv2d_backward(g, x.data(), params_.weights().data(), grad_out.data(),
                                       gx, pg.weights.data(), pg.bias.data());
  mask_gradient(params_.mask(), pg.weights);
  out.params = std::move(pg);
  return out;
}

SparseDenseLayer::SparseDenseLayer(MaskedParameters params) : params_(std::move(params)) {
  if (params_.weights().shape().rank() != 2)
    throw ShapeError("dense weights must be [out, in], got " + params_.weights().shape().str());
}

Shape SparseDenseLayer::output_shape(const Shape& input) const {
  require_rank(input, 2, "dense");
  if (input[1] != in_features())
    throw ShapeError("dense expects " + std::to_string(in_features()) + " features, got " +
                     input.str());
  return Shape{input[0], out_features()};
}

Tensor SparseDenseLayer::forward(const Tensor& x, Backend backend) const {
  Tensor y(output_shape(x.shape()));
  const kernels::DenseGeometry g{x.dim(0), in_features(), out_features()};
  if (backend == Backend::kSerial)
    kernels::serial::dense_forward(g, x.data(), params_.weights().data(), params_.bias().data(),
                                   y.data());
  else
    kernels::parallel::dense_forward(g, x.data(), params_.weights().data(),
                                     params_.bias().data(), y.data());
  return y;
}

LayerBackward SparseDenseLayer::backward(const Tensor& x, const Tensor& grad_out,
                                         bool want_input_grad, Backend backend) const {
  if (grad_out.shape() != output_shape(x.shape()))
    throw ShapeError("dense grad_out shape " + grad_out.shape().str() + " does not match output");
  const kernels::DenseGeometry g{x.dim(0), in_features(), out_features()};
  LayerBackward out;
  ParamGrads pg{Tensor(params_.weights().shape()), Tensor(params_.bias().shape())};
  std::span<double> gx;
  if (want_input_grad) {
    out.grad_input = Tensor(x.shape());
    gx = out.grad_input.data();
  }
  if (backend == Backend::kSerial)
    kernels::serial::dense_backward(g, x.data(), params_.weights().data(), grad_out.data(), gx,
                                    pg.weights.data(), pg.bias.data());
  else
    kernels::parallel::dense_backward(g, x.data(), params_.weights().data(), grad_out.data(),
                                      gx, pg.weights.data(), pg.bias.data());
  mask_gradient(params_.mask(), pg.weights);
  out.params = std::move(pg);
  return out;
}

Shape MaxPool2::output_shape(const Shape& input) const {
  require_rank(input, 4, "maxpool2");
  if (input[2] % 2 != 0 || input[3] % 2 != 0)
    throw ShapeError("maxpool2 needs even spatial dims, got " + input.str());
  return Shape{input[0], input[1], input[2] / 2, input[3] / 2};
}

Tensor MaxPool2::forward(const Tensor& x, std::vector<std::size_t>* argmax,
                         Backend backend) const {
  Tensor y(output_shape(x.shape()));
  const kernels::PoolGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  std::vector<std::size_t> local;
  std::vector<std::size_t>& idx = argmax ? *argmax : local;
  idx.resize(y.numel());
  if (backend == Backend::kSerial)
    kernels::serial::maxpool2_forward(g, x.data(), y.data(), idx);
  else
    kernels::parallel::maxpool2_forward(g, x.data(), y.data(), idx);
  return y;
}

Tensor MaxPool2::backward(const Tensor& x, std::span<const std::size_t> argmax,
                          const Tensor& grad_out, Backend backend) const {
  if (grad_out.shape() != output_shape(x.shape()) || argmax.size() != grad_out.numel())
    throw ShapeError("maxpool2 backward shape mismatch");
  Tensor gx(x.shape());
  const kernels::PoolGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  if (backend == Backend::kSerial)
    kernels::serial::maxpool2_backward(g, argmax, grad_out.data(), gx.data());
  else
    kernels::parallel::maxpool2_backward(g, argmax, grad_out.data(), gx.data());
  return gx;
}

Tensor Relu::forward(const Tensor& x, Backend backend) const {
  Tensor y(x.shape());
  if (backend == Backend::kSerial)
    kernels::serial::relu_forward(x.data(), y.data());
  else
    kernels::parallel::relu_forward(x.data(), y.data());
  return y;
}

Tensor Relu::backward(const Tensor& x, const Tensor& grad_out, Backend backend) const {
  if (grad_out.shape() != x.shape()) throw ShapeError("relu backward shape mismatch");
  Tensor gx(x.shape());
  if (backend == Backend::kSerial)
    kernels::serial::relu_backward(x.data(), grad_out.data(), gx.data());
  else
    kernels::parallel::relu_backward(x.data(), grad_out.data(), gx.data());
  return gx;
}

Shape Flatten::output_shape(const Shape& input) const {
  if (input.rank() < 2) throw ShapeError("flatten needs a batch dimension, got " + input.str());
  return Shape{input[0], input.numel() / input[0]};
}

Tensor Flatten::forward(const Tensor& x) const { return reshape(x, output_shape(x.shape())); }

Tensor Flatten::backward(const Tensor& x, const Tensor& grad_out) const {
  return reshape(grad_out, x.shape());
}

LayerKind kind_of(const Layer& layer) noexcept {
  switch (layer.index()) {
    case 0: return LayerKind::kConv;
    case 1: return LayerKind::kMaxPool2;
    case 2: return LayerKind::kRelu;
    case 3: return LayerKind::kFlatten;
    default: return LayerKind::kDense;
  }
}

const char* kind_name(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kMaxPool2: return "maxpool2";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kDense: return "dense";
  }
  return "unknown";
}

Shape output_shape(const Layer& layer, const Shape& input) {
  return std::visit([&](const auto& l) { return l.output_shape(input); }, layer);
}

const MaskedParameters* parameters_of(const Layer& layer) noexcept {
  if (const auto* c = std::get_if<SparseConvLayer>(&layer)) return &c->params();
  if (const auto* d = std::get_if<SparseDenseLayer>(&layer)) return &d->params();
  return nullptr;
}

MaskedParameters* parameters_of(Layer& layer) noexcept {
  if (auto* c = std::get_if<SparseConvLayer>(&layer)) return &c->params();
  if (auto* d = std::get_if<SparseDenseLayer>(&layer)) return &d->params();
  return nullptr;
}

}  // namespace stochnet
