#pragma once

// Oracles and fixtures shared by the unit tests and the acceptance runner.
// Nothing here calls into the kernels it is used to check.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "stochnet/network.hpp"
#include "stochnet/random.hpp"

namespace stochnet::test {

namespace fs = std::filesystem;

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  const CounterStream rng(seed);
  std::vector<double> v(shape.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = lo + (hi - lo) * rng.uniform(i);
  return Tensor(shape, std::move(v));
}

// Weights and biases drawn from U(-1, 1) under `mask`.
inline MaskedParameters random_params(const ConnectivityMask& mask, std::size_t bias_len,
                                      std::uint64_t seed, double connectivity = 1.0) {
  return MaskedParameters(random_tensor(mask.shape(), seed),
                          random_tensor(Shape{bias_len}, seed ^ 0x5bd1e995u), mask,
                          connectivity);
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Plain cross-correlation, x[n,c,h,w] * w[o,c,k,k] + b[o].
inline Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                         std::size_t pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t o = w.dim(0), k = w.dim(2);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor y(Shape{n, o, oh, ow});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t s = 0; s < ow; ++s) {
          double acc = b[oc];
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(r * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(s * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd))
                  continue;
                acc += x.at(in, ic, iy, ix) * w.at(oc, ic, ky, kx);
              }
          y.at(in, oc, r, s) = acc;
        }
  return y;
}

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

// ---- finite differences -------------------------------------------------

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTol = 1e-4;

struct FdStats {
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::size_t masked_nonzero = 0;  // masked-out positions with a non-zero analytic grad
  double max_rel = 0.0;
  double max_abs = 0.0;

  bool ok() const { return failures == 0 && masked_nonzero == 0 && checked > 0; }
  void merge(const FdStats& o) {
    checked += o.checked;
    failures += o.failures;
    masked_nonzero += o.masked_nonzero;
    max_rel = std::max(max_rel, o.max_rel);
    max_abs = std::max(max_abs, o.max_abs);
  }
};

inline void fd_record(FdStats& st, double analytic, double numeric, double rel_tol = kFdRelTol) {
  const double diff = std::abs(analytic - numeric);
  ++st.checked;
  st.max_abs = std::max(st.max_abs, diff);
  if (diff == 0.0) return;
  const double rel = diff / std::max(std::abs(analytic), std::abs(numeric));
  st.max_rel = std::max(st.max_rel, rel);
  if (rel >= rel_tol) ++st.failures;
}

// `loss(params)` evaluates the scalar objective with substituted parameters.
template <class LossFn>
FdStats fd_check_params(const MaskedParameters& p, const ParamGrads& g, LossFn loss) {
  FdStats st;
  auto eval_w = [&](std::size_t i, double delta) {
    Tensor w = p.weights();
    w[i] += delta;
    return loss(MaskedParameters(std::move(w), p.bias(), p.mask(), p.connectivity()));
  };
  auto eval_b = [&](std::size_t i, double delta) {
    Tensor b = p.bias();
    b[i] += delta;
    return loss(MaskedParameters(p.weights(), std::move(b), p.mask(), p.connectivity()));
  };
  for (std::size_t i = 0; i < p.weights().numel(); ++i) {
    if (!p.mask()[i]) {
      if (g.weights[i] != 0.0) ++st.masked_nonzero;
      continue;
    }
    fd_record(st, g.weights[i], (eval_w(i, kFdStep) - eval_w(i, -kFdStep)) / (2 * kFdStep));
  }
  for (std::size_t i = 0; i < p.bias().numel(); ++i)
    fd_record(st, g.bias[i], (eval_b(i, kFdStep) - eval_b(i, -kFdStep)) / (2 * kFdStep));
  return st;
}

template <class LossFn>
FdStats fd_check_input(const Tensor& x, const Tensor& grad, LossFn loss,
                       double rel_tol = kFdRelTol) {
  FdStats st;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += kFdStep;
    xm[i] -= kFdStep;
    fd_record(st, grad[i], (loss(xp) - loss(xm)) / (2 * kFdStep), rel_tol);
  }
  return st;
}

// ---- dense reference network ----------------------------------------------
//
// A from-scratch single-sample forward/backward over std::vector for a stack
// of conv/relu/pool/flatten/dense, reading weights out of a Network. Used only
// with all-ones masks.

struct RefLayerGrads {
  std::vector<double> weights;
  std::vector<double> bias;
};

struct RefResult {
  std::vector<double> logits;
  double loss = 0.0;
  std::vector<RefLayerGrads> grads;  // per layer; empty for parameter-free layers
  std::vector<double> input_grad;
};

inline RefResult reference_pass(const Network& net, std::span<const double> image, int label) {
  struct Act {
    std::vector<double> v;
    std::size_t c, h, w;
  };
  const auto& layers = net.layers();
  std::vector<Act> acts;
  acts.push_back({{image.begin(), image.end()},
                  net.input_shape()[0], net.input_shape()[1], net.input_shape()[2]});
  for (const Layer& layer : layers) {
    const Act& a = acts.back();
    Act out;
    if (const auto* conv = std::get_if<SparseConvLayer>(&layer)) {
      const auto& W = conv->params().weights().values();
      const auto& B = conv->params().bias().values();
      const std::size_t k = conv->kernel_size(), pad = conv->padding(), st = conv->stride();
      out.c = conv->out_channels();
      out.h = (a.h + 2 * pad - k) / st + 1;
      out.w = (a.w + 2 * pad - k) / st + 1;
      out.v.assign(out.c * out.h * out.w, 0.0);
      for (std::size_t o = 0; o < out.c; ++o)
        for (std::size_t r = 0; r < out.h; ++r)
          for (std::size_t s = 0; s < out.w; ++s) {
            double acc = B[o];
            for (std::size_t i = 0; i < a.c; ++i)
              for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const long y = static_cast<long>(r * st + ky) - static_cast<long>(pad);
                  const long x = static_cast<long>(s * st + kx) - static_cast<long>(pad);
                  if (y < 0 || x < 0 || y >= static_cast<long>(a.h) || x >= static_cast<long>(a.w))
                    continue;
                  acc += a.v[(i * a.h + y) * a.w + x] * W[((o * a.c + i) * k + ky) * k + kx];
                }
            out.v[(o * out.h + r) * out.w + s] = acc;
          }
    } else if (std::holds_alternative<Relu>(layer)) {
      out = a;
      for (double& v : out.v) v = v > 0.0 ? v : 0.0;
    } else if (std::holds_alternative<MaxPool2>(layer)) {
      out.c = a.c;
      out.h = a.h / 2;
      out.w = a.w / 2;
      out.v.assign(out.c * out.h * out.w, 0.0);
      for (std::size_t c = 0; c < a.c; ++c)
        for (std::size_t r = 0; r < out.h; ++r)
          for (std::size_t s = 0; s < out.w; ++s) {
            double m = -INFINITY;
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx)
                m = std::max(m, a.v[(c * a.h + 2 * r + dy) * a.w + 2 * s + dx]);
            out.v[(c * out.h + r) * out.w + s] = m;
          }
    } else if (std::holds_alternative<Flatten>(layer)) {
      out = {a.v, a.c * a.h * a.w, 1, 1};
    } else {
      const auto& d = std::get<SparseDenseLayer>(layer);
      const auto& W = d.params().weights().values();
      const auto& B = d.params().bias().values();
      const std::size_t in = a.v.size();
      out = {std::vector<double>(d.out_features()), d.out_features(), 1, 1};
      for (std::size_t o = 0; o < out.c; ++o) {
        double acc = B[o];
        for (std::size_t i = 0; i < in; ++i) acc += W[o * in + i] * a.v[i];
        out.v[o] = acc;
      }
    }
    acts.push_back(std::move(out));
  }

  RefResult res;
  res.logits = acts.back().v;
  const double mx = *std::max_element(res.logits.begin(), res.logits.end());
  double z = 0.0;
  for (double l : res.logits) z += std::exp(l - mx);
  res.loss = -(res.logits[label] - mx - std::log(z));
  std::vector<double> g(res.logits.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = std::exp(res.logits[i] - mx) / z - (static_cast<int>(i) == label ? 1.0 : 0.0);

  res.grads.resize(layers.size());
  for (std::size_t li = layers.size(); li-- > 0;) {
    const Act& a = acts[li];
    const Act& y = acts[li + 1];
    std::vector<double> gx(a.v.size(), 0.0);
    const Layer& layer = layers[li];
    if (const auto* conv = std::get_if<SparseConvLayer>(&layer)) {
      const auto& W = conv->params().weights().values();
      const std::size_t k = conv->kernel_size(), pad = conv->padding(), st = conv->stride();
      RefLayerGrads lg{std::vector<double>(W.size(), 0.0), std::vector<double>(y.c, 0.0)};
      for (std::size_t o = 0; o < y.c; ++o)
        for (std::size_t r = 0; r < y.h; ++r)
          for (std::size_t s = 0; s < y.w; ++s) {
            const double gy = g[(o * y.h + r) * y.w + s];
            lg.bias[o] += gy;
            for (std::size_t i = 0; i < a.c; ++i)
              for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const long yy = static_cast<long>(r * st + ky) - static_cast<long>(pad);
                  const long xx = static_cast<long>(s * st + kx) - static_cast<long>(pad);
                  if (yy < 0 || xx < 0 || yy >= static_cast<long>(a.h) ||
                      xx >= static_cast<long>(a.w))
                    continue;
                  const std::size_t wi = ((o * a.c + i) * k + ky) * k + kx;
                  const std::size_t xi = (i * a.h + yy) * a.w + xx;
                  lg.weights[wi] += gy * a.v[xi];
                  gx[xi] += gy * W[wi];
                }
          }
      res.grads[li] = std::move(lg);
    } else if (std::holds_alternative<Relu>(layer)) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = a.v[i] > 0.0 ? g[i] : 0.0;
    } else if (std::holds_alternative<MaxPool2>(layer)) {
      for (std::size_t c = 0; c < a.c; ++c)
        for (std::size_t r = 0; r < y.h; ++r)
          for (std::size_t s = 0; s < y.w; ++s) {
            // First maximum in row-major scan of the window.
            std::size_t best = (c * a.h + 2 * r) * a.w + 2 * s;
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t idx = (c * a.h + 2 * r + dy) * a.w + 2 * s + dx;
                if (a.v[idx] > a.v[best]) best = idx;
              }
            gx[best] += g[(c * y.h + r) * y.w + s];
          }
    } else if (std::holds_alternative<Flatten>(layer)) {
      gx = g;
    } else {
      const auto& W = std::get<SparseDenseLayer>(layer).params().weights().values();
      const std::size_t in = a.v.size();
      RefLayerGrads lg{std::vector<double>(W.size()), g};
      for (std::size_t o = 0; o < y.c; ++o)
        for (std::size_t i = 0; i < in; ++i) {
          lg.weights[o * in + i] = g[o] * a.v[i];
          gx[i] += W[o * in + i] * g[o];
        }
      res.grads[li] = std::move(lg);
    }
    g = std::move(gx);
  }
  res.input_grad = std::move(g);
  return res;
}

// ---- files --------------------------------------------------------------

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() /
            ("stochnet_" + tag + "_" + std::to_string(static_cast<long>(::getpid())));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

}  // namespace stochnet::test
