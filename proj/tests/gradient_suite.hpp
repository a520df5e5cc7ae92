#pragma once

// Central-difference checks of every layer type and of a small end-to-end
// network. Shared by the unit tests and the acceptance runner.

#include <string>
#include <vector>

#include "support.hpp"

namespace stochnet::test {

struct GradCase {
  std::string name;
  FdStats stats;
};

inline ConnectivityMask conv_mask(std::size_t out, std::size_t in, std::size_t k, double rho,
                                  std::uint64_t seed) {
  return realize_conv_mask(probability_map(GaussianConnectivityModel::preset(k, rho)), out, in,
                           seed);
}

// Values in [-1, -0.05] u [0.05, 1], so no ReLU input sits near its kink.
inline Tensor away_from_zero(const Shape& s, std::uint64_t seed) {
  Tensor t = random_tensor(s, seed);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = (t[i] < 0 ? -0.05 : 0.05) + 0.95 * t[i];
  return t;
}

inline std::vector<GradCase> gradient_suite(double rho, Backend backend) {
  std::vector<GradCase> out;
  const std::string tag = " rho=" + std::to_string(rho).substr(0, 4) +
                          (backend == Backend::kSerial ? " serial" : " parallel");

  // Conv layers; the objective is <y, r> for a fixed random r.
  struct ConvSpec {
    std::size_t in, out, k, stride, pad, h, w;
  };
  for (const ConvSpec c : {ConvSpec{2, 3, 5, 1, 2, 6, 6}, ConvSpec{2, 4, 3, 2, 1, 7, 6}}) {
    const SparseConvLayer layer(
        random_params(conv_mask(c.out, c.in, c.k, rho, 11 + c.k), c.out, 21 + c.k, rho),
        c.stride, c.pad);
    const Tensor x = random_tensor(Shape{1, c.in, c.h, c.w}, 31 + c.k);
    const Shape ys = layer.output_shape(x.shape());
    const Tensor r = random_tensor(ys, 41 + c.k);
    const LayerBackward g = layer.backward(x, r, true, backend);
    FdStats st = fd_check_params(layer.params(), *g.params, [&](const MaskedParameters& p) {
      return dot(SparseConvLayer(p, c.stride, c.pad).forward(x, backend), r);
    });
    st.merge(fd_check_input(x, g.grad_input,
                            [&](const Tensor& xx) { return dot(layer.forward(xx, backend), r); }));
    out.push_back({"conv k=" + std::to_string(c.k) + " stride=" + std::to_string(c.stride) + tag,
                   st});
  }

  {
    const SparseDenseLayer layer(
        random_params(realize_dense_mask(10, 6, rho, 51), 6, 52, rho));
    const Tensor x = random_tensor(Shape{4, 10}, 53);
    const Tensor r = random_tensor(Shape{4, 6}, 54);
    const LayerBackward g = layer.backward(x, r, true, backend);
    FdStats st = fd_check_params(layer.params(), *g.params, [&](const MaskedParameters& p) {
      return dot(SparseDenseLayer(p).forward(x, backend), r);
    });
    st.merge(fd_check_input(x, g.grad_input,
                            [&](const Tensor& xx) { return dot(layer.forward(xx, backend), r); }));
    out.push_back({"dense" + tag, st});
  }

  {
    const MaxPool2 pool;
    const Tensor x = random_tensor(Shape{2, 3, 4, 6}, 61);
    const Tensor r = random_tensor(pool.output_shape(x.shape()), 62);
    std::vector<std::size_t> argmax;
    (void)pool.forward(x, &argmax, backend);
    const Tensor gx = pool.backward(x, argmax, r, backend);
    out.push_back({"maxpool2" + tag, fd_check_input(x, gx, [&](const Tensor& xx) {
                     return dot(pool.forward(xx, nullptr, backend), r);
                   })});
  }

  {
    const Relu relu;
    const Tensor x = away_from_zero(Shape{2, 3, 4, 4}, 71);
    const Tensor r = random_tensor(x.shape(), 72);
    const Tensor gx = relu.backward(x, r, backend);
    out.push_back({"relu" + tag, fd_check_input(x, gx, [&](const Tensor& xx) {
                     return dot(relu.forward(xx, backend), r);
                   })});
  }

  {
    const Flatten flat;
    const Tensor x = random_tensor(Shape{2, 3, 2, 2}, 81);
    const Tensor r = random_tensor(Shape{2, 12}, 82);
    const Tensor gx = flat.backward(x, r);
    out.push_back({"flatten" + tag, fd_check_input(x, gx, [&](const Tensor& xx) {
                     return dot(flat.forward(xx), r);
                   })});
  }

  {
    const Tensor logits = random_tensor(Shape{3, 10}, 91, -3.0, 3.0);
    const std::vector<int> labels{2, 7, 0};
    const LossResult lr = softmax_cross_entropy(logits, labels);
    // Tighter bar for the loss head alone.
    const FdStats st = fd_check_input(
        logits, lr.grad_logits,
        [&](const Tensor& l) { return softmax_cross_entropy(l, labels).loss; }, 1e-6);
    out.push_back({"softmax cross-entropy" + tag, st});
  }

  // End to end: conv relu pool conv relu pool flatten dense relu dense, CE loss.
  {
    std::vector<Layer> layers;
    layers.emplace_back(SparseConvLayer(random_params(conv_mask(3, 2, 5, rho, 101), 3, 102, rho), 1, 2));
    layers.emplace_back(Relu{});
    layers.emplace_back(MaxPool2{});
    layers.emplace_back(SparseConvLayer(random_params(conv_mask(4, 3, 3, rho, 103), 4, 104, rho), 1, 1));
    layers.emplace_back(Relu{});
    layers.emplace_back(MaxPool2{});
    layers.emplace_back(Flatten{});
    layers.emplace_back(SparseDenseLayer(random_params(realize_dense_mask(16, 5, rho, 105), 5, 106, rho)));
    layers.emplace_back(Relu{});
    layers.emplace_back(SparseDenseLayer(random_params(realize_dense_mask(5, 3, rho, 107), 3, 108, rho)));
    Network net(Shape{2, 8, 8}, 3, std::move(layers), rho, 0);
    net.set_backend(backend);
    const Tensor x = random_tensor(Shape{4, 2, 8, 8}, 109);
    const std::vector<int> labels{0, 2, 1, 2};
    const ForwardTrace trace = net.forward_trace(x);
    const Gradients g = net.backward(trace, softmax_cross_entropy(trace.logits, labels).grad_logits,
                                     BackwardOptions{true});
    auto loss_with = [&](std::size_t li) {
      return [&, li](const MaskedParameters& p) {
        Network copy = net;
        *parameters_of(copy.layers()[li]) = p;
        return softmax_cross_entropy(copy.forward(x), labels).loss;
      };
    };
    FdStats st;
    for (std::size_t li = 0; li < net.layers().size(); ++li)
      if (const MaskedParameters* p = parameters_of(net.layers()[li]))
        st.merge(fd_check_params(*p, *g.layers[li], loss_with(li)));
    st.merge(fd_check_input(x, *g.input, [&](const Tensor& xx) {
      return softmax_cross_entropy(net.forward(xx), labels).loss;
    }));
    out.push_back({"network (4-sample batch)" + tag, st});
  }
  return out;
}

}  // namespace stochnet::test
