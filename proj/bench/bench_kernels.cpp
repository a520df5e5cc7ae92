// Serial reference vs OpenMP kernels on the shapes of the 32x32 architecture.
#include <benchmark/benchmark.h>

#include <vector>

#include "stochnet/kernels.hpp"
#include "stochnet/network.hpp"
#include "stochnet/random.hpp"

namespace {

using stochnet::kernels::ConvGeometry;

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  const stochnet::CounterStream s(seed);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 2.0 * s.uniform(i) - 1.0;
  return v;
}

// (in_channels, out_channels, spatial) of the three conv stages.
const ConvGeometry kStages[] = {
    {32, 3, 32, 32, 32, 5, 1, 2},
    {32, 32, 16, 16, 32, 5, 1, 2},
    {32, 32, 8, 8, 64, 5, 1, 2},
};

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const ConvGeometry& g = kStages[state.range(0)];
  const auto x = random_buffer(g.input_size(), 1);
  const auto w = random_buffer(g.weight_size(), 2);
  const auto b = random_buffer(g.out_channels, 3);
  std::vector<double> y(g.output_size());
  for (auto _ : state) {
    if constexpr (Parallel)
      stochnet::kernels::parallel::conv2d_forward(g, x, w, b, y);
    else
      stochnet::kernels::serial::conv2d_forward(g, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
  const double macs = static_cast<double>(g.output_size()) * static_cast<double>(g.patch());
  state.counters["GMAC/s"] = benchmark::Counter(macs, benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const ConvGeometry& g = kStages[state.range(0)];
  const auto x = random_buffer(g.input_size(), 1);
  const auto w = random_buffer(g.weight_size(), 2);
  const auto gy = random_buffer(g.output_size(), 3);
  std::vector<double> gx(g.input_size()), gw(g.weight_size()), gb(g.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel)
      stochnet::kernels::parallel::conv2d_backward(g, x, w, gy, gx, gw, gb);
    else
      stochnet::kernels::serial::conv2d_backward(g, x, w, gy, gx, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
  const double macs = 2.0 * static_cast<double>(g.output_size()) * static_cast<double>(g.patch());
  state.counters["GMAC/s"] = benchmark::Counter(macs, benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

void BM_TrainStep(benchmark::State& state) {
  auto net = stochnet::build_paper_architecture(3, 32, 10, 0.75, 7);
  net.set_backend(state.range(0) ? stochnet::Backend::kParallel : stochnet::Backend::kSerial);
  const stochnet::Tensor x(stochnet::Shape{32, 3, 32, 32}, random_buffer(32 * 3 * 32 * 32, 4));
  std::vector<int> labels(32);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  for (auto _ : state) {
    const auto trace = net.forward_trace(x);
    const auto loss = stochnet::softmax_cross_entropy(trace.logits, labels);
    auto grads = net.backward(trace, loss.grad_logits);
    benchmark::DoNotOptimize(grads);
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<true>)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<false>)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

namespace {
void BM_Forward(benchmark::State& state) {
  auto net = stochnet::build_paper_architecture(3, 32, 10, 0.75, 7);
  const stochnet::Tensor x(stochnet::Shape{32, 3, 32, 32}, random_buffer(32 * 3 * 32 * 32, 4));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
}  // namespace
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);
