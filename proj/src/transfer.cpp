#include "stochnet/transfer.hpp"

#include "stochnet/checkpoint.hpp"

namespace stochnet {

namespace {

std::string conv_dims(const SparseConvLayer& c) {
  return std::to_string(c.out_channels()) + "x" + std::to_string(c.in_channels()) + "x" +
         std::to_string(c.kernel_size()) + "x" + std::to_string(c.kernel_size()) + " stride " +
         std::to_string(c.stride()) + " pad " + std::to_string(c.padding());
}

}  // namespace

Network transfer_conv(const Network& source, const Network& target, TransferOptions options) {
  const auto src_idx = source.conv_layer_indices();
  const auto dst_idx = target.conv_layer_indices();
  if (src_idx.size() != dst_idx.size())
    throw TransferError("conv stacks differ in depth: source has " +
                        std::to_string(src_idx.size()) + " conv layers, target " +
                        std::to_string(dst_idx.size()));
  Network out = target;
  for (std::size_t j = 0; j < src_idx.size(); ++j) {
    const auto& src = std::get<SparseConvLayer>(source.layers()[src_idx[j]]);
    auto& dst = std::get<SparseConvLayer>(out.layers()[dst_idx[j]]);
    if (src.out_channels() != dst.out_channels() || src.in_channels() != dst.in_channels() ||
        src.kernel_size() != dst.kernel_size() || src.stride() != dst.stride() ||
        src.padding() != dst.padding())
      throw TransferError("conv layer " + std::to_string(j + 1) + " mismatch: source " +
                          conv_dims(src) + ", target " + conv_dims(dst));
    dst = src;
    dst.params().set_frozen(!options.fine_tune_all);
  }
  return out;
}

Dataset subsample(const Dataset& d, double fraction, SubsampleMode mode, std::uint64_t seed) {
  return mode == SubsampleMode::kStratified ? subsample_stratified(d, fraction, seed)
                                            : subsample_uniform(d, fraction, seed);
}

ProtocolResult run_paper_protocol(const Dataset& source_train, const Dataset& source_test,
                                  const Dataset& target_train, const Dataset& target_test,
                                  const ProtocolConfig& config) {
  Network source = build_paper_architecture(source_train.channels(), source_train.height(),
                                            source_train.num_classes, config.connectivity,
                                            config.seeds.source_net);
  TrainingLog source_log = train(source, source_train, source_test, config.source);

  const Dataset subset = subsample(target_train, config.target_fraction, config.sampling,
                                   config.seeds.subsample);
  const Network fresh_target = build_paper_architecture(
      target_train.channels(), target_train.height(), target_train.num_classes,
      config.connectivity, config.seeds.target_net);

  Network transferred = transfer_conv(source, fresh_target, config.transfer);
  std::vector<std::string> before;
  for (std::size_t i : transferred.conv_layer_indices()) before.push_back(layer_digest(transferred, i));
  TrainingLog transfer_log = train(transferred, subset, target_test, config.target);
  std::vector<std::string> after;
  for (std::size_t i : transferred.conv_layer_indices()) after.push_back(layer_digest(transferred, i));

  Network baseline = fresh_target;
  TrainingLog baseline_log = train(baseline, subset, target_test, config.target);

  return ProtocolResult{std::move(source),       std::move(transferred), std::move(baseline),
                        std::move(source_log),   std::move(transfer_log), std::move(baseline_log),
                        subset.size(),           std::move(before),       std::move(after)};
}

}  // namespace stochnet
