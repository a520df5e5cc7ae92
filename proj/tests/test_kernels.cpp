#include <doctest.h>
#include <omp.h>

#include "stochnet/kernels.hpp"
#include "support.hpp"

using namespace stochnet;
namespace kn = stochnet::kernels;
using test::max_abs_diff;
using test::random_tensor;

namespace {

struct ConvCase {
  kn::ConvGeometry g;
  std::uint64_t seed;
};

std::vector<ConvCase> conv_cases() {
  std::vector<ConvCase> out;
  std::uint64_t seed = 1;
  // batch, ic, h, w, oc, k, stride, pad
  for (auto g : {kn::ConvGeometry{2, 3, 8, 8, 4, 3, 1, 1}, kn::ConvGeometry{1, 1, 5, 7, 2, 5, 1, 2},
                 kn::ConvGeometry{3, 2, 9, 6, 5, 3, 2, 0}, kn::ConvGeometry{2, 4, 6, 6, 3, 1, 1, 0},
                 kn::ConvGeometry{1, 5, 12, 12, 9, 5, 1, 2}, kn::ConvGeometry{2, 3, 7, 7, 6, 5, 2, 1}})
    out.push_back({g, seed++});
  return out;
}

struct ConvBuffers {
  Tensor x, w, b, gy;
};

ConvBuffers make_buffers(const kn::ConvGeometry& g, std::uint64_t seed) {
  return {random_tensor(Shape{g.batch, g.in_channels, g.in_h, g.in_w}, seed),
          random_tensor(Shape{g.out_channels, g.in_channels, g.kernel, g.kernel}, seed + 100),
          random_tensor(Shape{g.out_channels}, seed + 200),
          random_tensor(Shape{g.batch, g.out_channels, g.out_h(), g.out_w()}, seed + 300)};
}

struct ConvGrads {
  std::vector<double> x, w, b;
};

template <class Backward>
ConvGrads run_backward(const kn::ConvGeometry& g, const ConvBuffers& buf, Backward backward) {
  ConvGrads r{std::vector<double>(g.input_size()), std::vector<double>(g.weight_size()),
              std::vector<double>(g.out_channels)};
  backward(g, buf.x.data(), buf.w.data(), buf.gy.data(), std::span<double>(r.x),
           std::span<double>(r.w), std::span<double>(r.b));
  return r;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("conv forward matches the 6-loop oracle in both backends") {
  for (const auto& [g, seed] : conv_cases()) {
    const ConvBuffers buf = make_buffers(g, seed);
    const Tensor expect = test::naive_conv(buf.x, buf.w, buf.b, g.stride, g.padding);
    std::vector<double> ys(g.output_size()), yp(g.output_size());
    kn::serial::conv2d_forward(g, buf.x.data(), buf.w.data(), buf.b.data(), ys);
    kn::parallel::conv2d_forward(g, buf.x.data(), buf.w.data(), buf.b.data(), yp);
    CHECK(max_abs_diff(ys, expect.data()) < 1e-12);
    CHECK(max_abs_diff(yp, expect.data()) < 1e-12);
  }
}

TEST_CASE("conv backward: parallel agrees with serial") {
  for (const auto& [g, seed] : conv_cases()) {
    const ConvBuffers buf = make_buffers(g, seed);
    const ConvGrads s = run_backward(g, buf, kn::serial::conv2d_backward);
    const ConvGrads p = run_backward(g, buf, kn::parallel::conv2d_backward);
    CHECK(max_abs_diff(s.x, p.x) < 1e-12);
    CHECK(max_abs_diff(s.w, p.w) < 1e-12);
    CHECK(max_abs_diff(s.b, p.b) < 1e-12);

    // Skipping the input gradient leaves the parameter gradients alone.
    std::vector<double> gw(g.weight_size()), gb(g.out_channels);
    kn::parallel::conv2d_backward(g, buf.x.data(), buf.w.data(), buf.gy.data(), {}, gw, gb);
    CHECK(gw == p.w);
    CHECK(gb == p.b);
  }
}

TEST_CASE("conv backward weight gradient matches an explicit correlation") {
  const kn::ConvGeometry g{2, 2, 6, 6, 3, 3, 1, 1};
  const ConvBuffers buf = make_buffers(g, 42);
  const ConvGrads s = run_backward(g, buf, kn::serial::conv2d_backward);
  // dL/dW for L = <conv(x), gy> is conv(x, .) read back through gy: perturbing
  // W linearly changes L by <naive_conv(x, dW, 0), gy>.
  for (std::size_t i = 0; i < g.weight_size(); ++i) {
    Tensor dw(buf.w.shape());
    dw[i] = 1.0;
    const double expect =
        test::dot(test::naive_conv(buf.x, dw, Tensor(Shape{3}), g.stride, g.padding), buf.gy);
    CHECK(s.w[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("parallel kernels are bit-identical across thread counts") {
  const int saved = omp_get_max_threads();
  const kn::ConvGeometry g{5, 3, 10, 10, 8, 5, 1, 2};
  const ConvBuffers buf = make_buffers(g, 9);
  std::vector<std::vector<double>> fwd;
  std::vector<ConvGrads> bwd;
  std::vector<std::vector<double>> mm;
  const Tensor a = random_tensor(Shape{37, 50}, 1), b = random_tensor(Shape{50, 41}, 2);
  for (int threads : {1, 2, 3, 4}) {
    omp_set_num_threads(threads);
    std::vector<double> y(g.output_size());
    kn::parallel::conv2d_forward(g, buf.x.data(), buf.w.data(), buf.b.data(), y);
    fwd.push_back(y);
    bwd.push_back(run_backward(g, buf, kn::parallel::conv2d_backward));
    std::vector<double> c(37 * 41);
    kn::parallel::gemm(37, 41, 50, a.data().data(), b.data().data(), c.data());
    mm.push_back(c);
  }
  omp_set_num_threads(saved);
  for (std::size_t t = 1; t < fwd.size(); ++t) {
    CHECK(fwd[t] == fwd[0]);
    CHECK(bwd[t].x == bwd[0].x);
    CHECK(bwd[t].w == bwd[0].w);
    CHECK(bwd[t].b == bwd[0].b);
    CHECK(mm[t] == mm[0]);
  }
}

TEST_CASE("dense kernels: parallel agrees with serial") {
  const kn::DenseGeometry g{7, 33, 19};
  const Tensor x = random_tensor(Shape{7, 33}, 1), w = random_tensor(Shape{19, 33}, 2);
  const Tensor b = random_tensor(Shape{19}, 3), gy = random_tensor(Shape{7, 19}, 4);
  std::vector<double> ys(7 * 19), yp(7 * 19);
  kn::serial::dense_forward(g, x.data(), w.data(), b.data(), ys);
  kn::parallel::dense_forward(g, x.data(), w.data(), b.data(), yp);
  CHECK(max_abs_diff(ys, yp) < 1e-12);
  std::vector<double> gxs(7 * 33), gws(19 * 33), gbs(19), gxp(7 * 33), gwp(19 * 33), gbp(19);
  kn::serial::dense_backward(g, x.data(), w.data(), gy.data(), gxs, gws, gbs);
  kn::parallel::dense_backward(g, x.data(), w.data(), gy.data(), gxp, gwp, gbp);
  CHECK(max_abs_diff(gxs, gxp) < 1e-12);
  CHECK(max_abs_diff(gws, gwp) < 1e-12);
  CHECK(max_abs_diff(gbs, gbp) < 1e-12);
}

TEST_CASE("pool and relu kernels are identical in both backends") {
  const kn::PoolGeometry g{2, 3, 6, 8};
  Tensor x = random_tensor(Shape{2, 3, 6, 8}, 5);
  x[0] = x[1];  // a tie
  std::vector<double> ys(2 * 3 * 3 * 4), yp(ys.size());
  std::vector<std::size_t> as(ys.size()), ap(ys.size());
  kn::serial::maxpool2_forward(g, x.data(), ys, as);
  kn::parallel::maxpool2_forward(g, x.data(), yp, ap);
  CHECK(ys == yp);
  CHECK(as == ap);
  const Tensor gy = random_tensor(Shape{2, 3, 3, 4}, 6);
  std::vector<double> gs(x.numel()), gp(x.numel());
  kn::serial::maxpool2_backward(g, as, gy.data(), gs);
  kn::parallel::maxpool2_backward(g, ap, gy.data(), gp);
  CHECK(gs == gp);

  std::vector<double> rs(x.numel()), rp(x.numel());
  kn::serial::relu_forward(x.data(), rs);
  kn::parallel::relu_forward(x.data(), rp);
  CHECK(rs == rp);
  kn::serial::relu_backward(x.data(), x.data(), rs);
  kn::parallel::relu_backward(x.data(), x.data(), rp);
  CHECK(rs == rp);
}

}  // TEST_SUITE
