#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stochnet/data.hpp"
#include "stochnet/network.hpp"
#include "stochnet/training.hpp"

namespace stochnet {

class TransferError : public Error {
 public:
  explicit TransferError(const std::string& message) : Error("transfer", message) {}
};

struct TransferOptions {
  // Leave transplanted conv layers trainable (fine-tune everything).
  bool fine_tune_all = false;
};

// Copies weights, biases and masks of every conv layer of `source` into the
// matching conv layer of `target` and freezes them. Dense layers of `target`
// keep their own masks and initialisation. Conv stacks must agree in count,
// filter dims, stride and padding; input resolution may differ.
Network transfer_conv(const Network& source, const Network& target, TransferOptions options = {});

enum class SubsampleMode { kStratified, kUniform };

struct ProtocolSeeds {
  std::uint64_t source_net = 1;
  std::uint64_t target_net = 2;  // shared by the transfer and baseline nets
  std::uint64_t subsample = 3;
};

struct ProtocolConfig {
  double connectivity = 0.75;
  double target_fraction = 0.20;
  SubsampleMode sampling = SubsampleMode::kStratified;
  SGDConfig source;
  SGDConfig target;
  ProtocolSeeds seeds;
  TransferOptions transfer;
};

struct ProtocolResult {
  Network source_net;
  Network transfer_net;
  Network baseline_net;
  TrainingLog source_log;
  TrainingLog transfer_log;
  TrainingLog baseline_log;
  std::size_t target_train_size = 0;
  // SHA-256 of each transplanted conv payload before and after head training.
  std::vector<std::string> conv_digests_before;
  std::vector<std::string> conv_digests_after;
};

Dataset subsample(const Dataset& d, double fraction, SubsampleMode mode, std::uint64_t seed);

// (1) train a source net; (2) build a target net, transplant and freeze the
// conv stack, train the head on the subsampled target set; (3) train an
// identically seeded baseline from scratch on the same subset.
ProtocolResult run_paper_protocol(const Dataset& source_train, const Dataset& source_test,
                                  const Dataset& target_train, const Dataset& target_test,
                                  const ProtocolConfig& config);

}  // namespace stochnet
