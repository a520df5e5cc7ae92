#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stochnet/data.hpp"
#include "stochnet/network.hpp"

namespace stochnet {

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t step, double loss);
  std::size_t step() const noexcept { return step_; }
  double loss() const noexcept { return loss_; }

 private:
  std::size_t step_;
  double loss_;
};

struct SGDConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t shuffle_seed = 0;
  double lr_decay = 0.98;      // multiplicative, per epoch
  bool log_iterations = false;  // also record the loss of every step

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_error = 0.0;
  double test_error = 0.0;
  double mean_loss = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct IterationRecord {
  std::size_t step = 0;  // 1-based, global
  std::size_t epoch = 0;
  double loss = 0.0;
  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::vector<IterationRecord> iterations;

  // `epoch,train_error,test_error,mean_loss`, 6-decimal fixed point. Each
  // line of `preamble` is written first as a `# ` comment.
  std::string to_csv(const std::string& preamble = {}) const;
  std::string iterations_csv(const std::string& preamble = {}) const;
  static TrainingLog from_csv(const std::string& text);

  friend bool operator==(const TrainingLog&, const TrainingLog&) = default;
};

// Momentum SGD over the unfrozen masked layers of one network:
//   v <- momentum * v - lr * grad;  W <- (W + v) * mask;  v <- v * mask
class SgdMomentum {
 public:
  explicit SgdMomentum(const Network& net);

  void step(Network& net, const Gradients& grads, double learning_rate, double momentum);

  // Empty tensors for layers without parameters.
  const Tensor& weight_velocity(std::size_t layer) const { return weight_velocity_.at(layer); }
  const Tensor& bias_velocity(std::size_t layer) const { return bias_velocity_.at(layer); }

 private:
  std::vector<Tensor> weight_velocity_;
  std::vector<Tensor> bias_velocity_;
};

// Fraction of samples whose arg-max logit (lowest index on ties) differs
// from the label.
double evaluate(const Network& net, const Dataset& data, std::size_t batch_size = 64);

struct TrainHooks {
  std::function<void(std::size_t step, const Network&, const SgdMomentum&)> after_step;
};

// Runs cfg.epochs epochs of mini-batch SGD on `net` in place; the data order
// is reshuffled every epoch from cfg.shuffle_seed. Frozen layers are never
// written.
TrainingLog train(Network& net, const Dataset& train_set, const Dataset& test_set,
                  const SGDConfig& cfg, const TrainHooks& hooks = {});

struct LayerFreezeInfo {
  std::size_t layer_index = 0;
  LayerKind kind = LayerKind::kConv;
  bool frozen = false;
  std::size_t param_count = 0;
  std::size_t surviving_count = 0;
};

// One entry per parameterised layer.
std::vector<LayerFreezeInfo> freeze_report(const Network& net);

}  // namespace stochnet
