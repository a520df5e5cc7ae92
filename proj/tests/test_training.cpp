#include <doctest.h>

#include "stochnet/checkpoint.hpp"
#include "stochnet/synthetic.hpp"
#include "stochnet/training.hpp"
#include "support.hpp"

using namespace stochnet;
using namespace stochnet::test;

namespace {

// Flatten + dense whose logits are the bias alone.
Network constant_net(std::size_t classes, std::size_t favoured) {
  Tensor bias(Shape{classes});
  bias[favoured] = 1.0;
  std::vector<Layer> layers;
  layers.emplace_back(Flatten{});
  layers.emplace_back(SparseDenseLayer(MaskedParameters(
      Tensor(Shape{classes, 4}), bias, ConnectivityMask::ones(Shape{classes, 4}), 1.0)));
  return Network(Shape{1, 2, 2}, classes, std::move(layers));
}

Dataset labelled(std::size_t n, std::size_t classes, bool balanced) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = balanced ? static_cast<int>(i % classes) : 0;
  return make_dataset(random_tensor(Shape{n, 1, 2, 2}, 3, 0, 1), labels, classes);
}

// 20 one-channel 6x6 images; class 0 lights the left half, class 1 the right.
Dataset separable(std::uint64_t seed) {
  const std::size_t n = 20;
  Tensor x = random_tensor(Shape{n, 1, 6, 6}, seed, 0.0, 0.2);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % 2);
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 0; c < 3; ++c) x.at(i, 0, r, labels[i] ? c + 3 : c) += 0.8;
  }
  return make_dataset(std::move(x), std::move(labels), 2);
}

Network small_net(double rho, std::uint64_t seed) {
  std::vector<Layer> layers;
  layers.emplace_back(make_sparse_conv(1, 4, 3, rho, seed, seed + 1));
  layers.emplace_back(Relu{});
  layers.emplace_back(MaxPool2{});
  layers.emplace_back(Flatten{});
  layers.emplace_back(make_sparse_dense(36, 8, rho, seed + 2, seed + 3));
  layers.emplace_back(Relu{});
  layers.emplace_back(make_sparse_dense(8, 2, rho, seed + 4, seed + 5));
  return Network(Shape{1, 6, 6}, 2, std::move(layers), rho, seed);
}

SGDConfig quick(std::size_t epochs, std::size_t batch = 8) {
  SGDConfig c;
  c.epochs = epochs;
  c.batch_size = batch;
  c.learning_rate = 0.05;
  c.shuffle_seed = 17;
  return c;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("evaluate: constant predictor") {
  const Network net = constant_net(10, 0);
  CHECK(evaluate(net, labelled(50, 10, false)) == 0.0);
  CHECK(evaluate(net, labelled(1000, 10, true)) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK_THROWS_AS(evaluate(net, Dataset{}), DataError);
}

TEST_CASE("evaluate: ties go to the lowest class") {
  Network net = constant_net(4, 0);
  *parameters_of(net.layers()[1]) = MaskedParameters(
      Tensor(Shape{4, 4}), Tensor(Shape{4}, {0, 1, 1, 0}), ConnectivityMask::ones(Shape{4, 4}), 1.0);
  Dataset d = labelled(4, 4, true);
  // Logits (0,1,1,0): class 1 wins the tie with class 2.
  CHECK(evaluate(net, d) == 0.75);
  d.labels = {1, 1, 1, 1};
  CHECK(evaluate(net, d) == 0.0);
}

TEST_CASE("untrained network is at chance on a balanced synthetic set") {
  SyntheticConfig sc;
  sc.n_per_class = 1;
  sc.test_per_class = 50;
  sc.seed = 4;
  const Dataset test = generate_synthetic_domains(sc).target_test;
  const Network net = build_paper_architecture(3, 32, 10, 0.75, 8);
  CHECK(std::abs(evaluate(net, test) - 0.9) <= 0.05);
}

TEST_CASE("config validation") {
  SGDConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), ValueError);
  c = {};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ValueError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ValueError);
  c = {};
  c.lr_decay = 0.0;
  CHECK_THROWS_AS(c.validate(), ValueError);
  c = {};
  CHECK(c.learning_rate == 0.01);
  CHECK(c.momentum == 0.9);
  CHECK(c.batch_size == 32);
  CHECK(c.lr_decay == 0.98);
}

TEST_CASE("epochs=0 leaves the network unchanged") {
  Network net = small_net(0.75, 1);
  const Network before = net;
  const TrainingLog log = train(net, separable(1), separable(2), quick(0));
  CHECK(log.epochs.empty());
  CHECK(net == before);
}

TEST_CASE("empty sets are rejected") {
  Network net = small_net(0.75, 1);
  CHECK_THROWS_AS(train(net, Dataset{}, separable(2), quick(1)), DataError);
  CHECK_THROWS_AS(train(net, separable(1), Dataset{}, quick(1)), DataError);
}

TEST_CASE("lr=0 keeps weights bit-identical") {
  Network net = small_net(0.75, 1);
  const Network before = net;
  SGDConfig c = quick(3);
  c.learning_rate = 0.0;
  const TrainingLog log = train(net, separable(1), separable(2), c);
  CHECK(log.epochs.size() == 3);
  CHECK(net == before);
}

TEST_CASE("separable set converges in 200 single-batch epochs") {
  Network net = small_net(0.75, 3);
  const Dataset d = separable(5);
  const TrainingLog log = train(net, d, separable(6), quick(200, 20));
  REQUIRE(log.epochs.size() == 200);
  CHECK(log.epochs.back().train_error == 0.0);
  CHECK(log.epochs.back().mean_loss < log.epochs.front().mean_loss);
  for (const auto& r : log.epochs) {
    CHECK(r.train_error >= 0.0);
    CHECK(r.train_error <= 1.0);
    CHECK(r.test_error >= 0.0);
    CHECK(r.test_error <= 1.0);
  }
}

TEST_CASE("mask-zero invariant and masked velocities over 100 steps") {
  Network net = small_net(0.5, 9);
  std::size_t steps = 0;
  TrainHooks hooks;
  hooks.after_step = [&](std::size_t, const Network& n, const SgdMomentum& opt) {
    ++steps;
    for (std::size_t li = 0; li < n.layers().size(); ++li) {
      const MaskedParameters* p = parameters_of(n.layers()[li]);
      if (!p) continue;
      for (std::size_t i = 0; i < p->mask().size(); ++i)
        if (!p->mask()[i]) {
          REQUIRE(p->weights()[i] == 0.0);
          REQUIRE(opt.weight_velocity(li)[i] == 0.0);
        }
    }
  };
  // 20 samples, batch 4: 5 steps per epoch.
  (void)train(net, separable(1), separable(2), quick(20, 4), hooks);
  CHECK(steps == 100);
}

TEST_CASE("frozen layers are never written") {
  Network net = small_net(0.75, 4);
  parameters_of(net.layers()[0])->set_frozen(true);
  parameters_of(net.layers()[4])->set_frozen(true);
  const std::string conv = layer_digest(net, 0), dense = layer_digest(net, 4);
  const std::string head = layer_digest(net, 6);
  (void)train(net, separable(1), separable(2), quick(5));
  CHECK(layer_digest(net, 0) == conv);
  CHECK(layer_digest(net, 4) == dense);
  CHECK(layer_digest(net, 6) != head);
}

TEST_CASE("training is deterministic") {
  Network a = small_net(0.75, 4), b = small_net(0.75, 4);
  const TrainingLog la = train(a, separable(1), separable(2), quick(4));
  const TrainingLog lb = train(b, separable(1), separable(2), quick(4));
  CHECK(la == lb);
  CHECK(a == b);
  SGDConfig other = quick(4);
  other.shuffle_seed = 18;
  Network c = small_net(0.75, 4);
  (void)train(c, separable(1), separable(2), other);
  CHECK_FALSE(a == c);
}

TEST_CASE("frozen-prefix training equals a plain full-network loop") {
  // Reference loop: full forward from the input on every step, no caching.
  Network net = small_net(0.75, 12);
  parameters_of(net.layers()[0])->set_frozen(true);
  Network ref = net;
  const Dataset train_set = separable(3), test_set = separable(4);
  const SGDConfig cfg = quick(3, 6);
  const TrainingLog log = train(net, train_set, test_set, cfg);

  SgdMomentum opt(ref);
  const CounterStream shuffle(cfg.shuffle_seed);
  Tensor batch;
  std::vector<int> labels;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto order = seeded_permutation(train_set.size(), shuffle.bits(e));
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(e));
    for (std::size_t b = 0; b < train_set.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(train_set.size(), b + cfg.batch_size);
      extract_batch(train_set, order, b, end, batch, labels);
      const ForwardTrace t = ref.forward_trace(batch);
      opt.step(ref, ref.backward(t, softmax_cross_entropy(t.logits, labels).grad_logits), lr,
               cfg.momentum);
    }
    CHECK(log.epochs[e].train_error == evaluate(ref, train_set));
    CHECK(log.epochs[e].test_error == evaluate(ref, test_set));
  }
  CHECK(net == ref);
}

TEST_CASE("divergence aborts with the step and loss") {
  // Saturated first-layer weights overflow to inf, and inf - inf downstream.
  Network net = small_net(1.0, 2);
  MaskedParameters& p = *parameters_of(net.layers()[0]);
  Tensor w = p.weights();
  for (double& v : w.data()) v = std::numeric_limits<double>::max();
  p = MaskedParameters(w, p.bias(), p.mask(), 1.0);
  SGDConfig c = quick(2, 4);
  try {
    (void)train(net, separable(1), separable(2), c);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(e.step() == 1);
    CHECK_FALSE(std::isfinite(e.loss()));
    CHECK(std::string(e.what()).find("step") != std::string::npos);
    CHECK(e.kind() == "diverged");
  }
}

TEST_CASE("iteration logging") {
  Network net = small_net(0.75, 2);
  SGDConfig c = quick(3, 6);
  c.log_iterations = true;
  const TrainingLog log = train(net, separable(1), separable(2), c);
  REQUIRE(log.iterations.size() == 12);  // 3 epochs x ceil(20 / 6)
  CHECK(log.iterations.front().step == 1);
  CHECK(log.iterations.back().step == 12);
  CHECK(log.iterations.back().epoch == 3);
  const std::string csv = log.iterations_csv();
  CHECK(csv.rfind("step,epoch,loss\n", 0) == 0);
}

TEST_CASE("training log CSV") {
  TrainingLog log;
  log.epochs.push_back({1, 0.5, 0.25, 1.2345678});
  log.epochs.push_back({2, 0.125, 0.0625, 0.5});
  const std::string csv = log.to_csv("config: {}\nsecond");
  CHECK(csv ==
        "# config: {}\n# second\n"
        "epoch,train_error,test_error,mean_loss\n"
        "1,0.500000,0.250000,1.234568\n"
        "2,0.125000,0.062500,0.500000\n");
  const TrainingLog back = TrainingLog::from_csv(csv);
  REQUIRE(back.epochs.size() == 2);
  CHECK(back.epochs[0].mean_loss == 1.234568);
  CHECK(back.epochs[1].test_error == 0.0625);
  CHECK_THROWS_AS(TrainingLog::from_csv("bad,header\n"), ValueError);
  CHECK_THROWS_AS(TrainingLog::from_csv("epoch,train_error,test_error,mean_loss\n1,x\n"), ValueError);
}

TEST_CASE("freeze report") {
  Network net = build_paper_architecture(3, 32, 10, 0.75, 6);
  auto report = freeze_report(net);
  REQUIRE(report.size() == 5);
  for (const auto& r : report) CHECK_FALSE(r.frozen);
  for (std::size_t i : net.conv_layer_indices()) parameters_of(net.layers()[i])->set_frozen(true);
  report = freeze_report(net);
  for (const auto& r : report) {
    CHECK(r.frozen == (r.kind == LayerKind::kConv));
    const double frac = static_cast<double>(r.surviving_count) / static_cast<double>(r.param_count);
    CHECK(std::abs(frac - 0.75) < 5 * std::sqrt(0.75 * 0.25 / static_cast<double>(r.param_count)));
  }
  CHECK(report[0].param_count == 32 * 3 * 25);
  CHECK(report[3].layer_index == 10);
}

}  // TEST_SUITE
