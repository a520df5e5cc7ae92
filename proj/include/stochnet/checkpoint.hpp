#pragma once

// Binary checkpoint, all integers and reals little-endian:
//
//   "SNET"  u16 version (=1)
//   u32 in_channels  u32 in_h  u32 in_w  u32 num_classes  f64 connectivity  u64 seed
//   u32 layer_count, then per layer:
//     u32 body_length, u8 kind, u8 frozen, kind-specific dims:
//       conv  : u32 out, u32 in, u32 k, u32 stride, u32 pad, f64 rho, u64 mask_seed
//       dense : u32 out, u32 in, f64 rho, u64 mask_seed
//       others: nothing
//   per masked layer, in layer order:
//     mask bits packed LSB-first, padded to a byte; f64 weights; f64 biases
//   u32 CRC-32 of every byte after the magic

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stochnet/network.hpp"

namespace stochnet {

enum class CheckpointErrorCode { kIo, kBadMagic, kVersionMismatch, kTruncated, kChecksumMismatch, kMalformed };

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorCode code, const std::string& message);
  CheckpointErrorCode code() const noexcept { return code_; }

 private:
  CheckpointErrorCode code_;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize(const Network& net);
Network deserialize(std::span<const std::uint8_t> bytes);

void save(const Network& net, const std::filesystem::path& path);
Network load(const std::filesystem::path& path);

// Packed mask, weights and biases of one layer, exactly as stored.
std::vector<std::uint8_t> layer_payload(const MaskedParameters& params);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string layer_digest(const Network& net, std::size_t layer_index);

}  // namespace stochnet
