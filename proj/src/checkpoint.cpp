#include "stochnet/checkpoint.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>

namespace stochnet {

namespace {

const char* code_name(CheckpointErrorCode code) {
  switch (code) {
    case CheckpointErrorCode::kIo: return "checkpoint-io";
    case CheckpointErrorCode::kBadMagic: return "checkpoint-magic";
    case CheckpointErrorCode::kVersionMismatch: return "checkpoint-version";
    case CheckpointErrorCode::kTruncated: return "checkpoint-truncated";
    case CheckpointErrorCode::kChecksumMismatch: return "checkpoint-checksum";
    case CheckpointErrorCode::kMalformed: return "checkpoint-malformed";
  }
  return "checkpoint";
}

constexpr std::uint8_t kMagic[4] = {'S', 'N', 'E', 'T'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint64_t v) {
    if (v > 0xffffffffu) throw CheckpointError(CheckpointErrorCode::kMalformed, "dimension exceeds u32");
    put(v, 4);
  }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  std::size_t size() const { return out_.size(); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : in_(bytes) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > in_.size() - pos_)
      throw CheckpointError(CheckpointErrorCode::kTruncated,
                            "checkpoint truncated at byte offset " + std::to_string(in_.size()) +
                                " (needed " + std::to_string(pos_ + n) + ")");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t len = std::min(kChunk, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(len));
  }
  return static_cast<std::uint32_t>(crc);
}

constexpr std::uint32_t kConvBody = 2 + 5 * 4 + 8 + 8;
constexpr std::uint32_t kDenseBody = 2 + 2 * 4 + 8 + 8;
constexpr std::uint32_t kPlainBody = 2;

[[noreturn]] void malformed(const std::string& what) {
  throw CheckpointError(CheckpointErrorCode::kMalformed, "malformed checkpoint: " + what);
}

}  // namespace

CheckpointError::CheckpointError(CheckpointErrorCode code, const std::string& message)
    : Error(code_name(code), message), code_(code) {}

std::vector<std::uint8_t> layer_payload(const MaskedParameters& params) {
  Writer w;
  w.bytes(params.mask().pack());
  for (double v : params.weights().data()) w.f64(v);
  for (double v : params.bias().data()) w.f64(v);
  return std::move(w.buffer());
}

std::vector<std::uint8_t> serialize(const Network& net) {
  Writer w;
  w.bytes(kMagic);
  w.u16(kCheckpointVersion);
  w.u32(net.input_shape()[0]);
  w.u32(net.input_shape()[1]);
  w.u32(net.input_shape()[2]);
  w.u32(net.num_classes());
  w.f64(net.connectivity());
  w.u64(net.seed());
  w.u32(net.layers().size());
  for (const Layer& layer : net.layers()) {
    const LayerKind kind = kind_of(layer);
    const MaskedParameters* p = parameters_of(layer);
    if (const auto* c = std::get_if<SparseConvLayer>(&layer)) {
      w.u32(kConvBody);
      w.u8(static_cast<std::uint8_t>(kind));
      w.u8(p->frozen() ? 1 : 0);
      w.u32(c->out_channels());
      w.u32(c->in_channels());
      w.u32(c->kernel_size());
      w.u32(c->stride());
      w.u32(c->padding());
      w.f64(p->connectivity());
      w.u64(p->mask().seed());
    } else if (const auto* d = std::get_if<SparseDenseLayer>(&layer)) {
      w.u32(kDenseBody);
      w.u8(static_cast<std::uint8_t>(kind));
      w.u8(p->frozen() ? 1 : 0);
      w.u32(d->out_features());
      w.u32(d->in_features());
      w.f64(p->connectivity());
      w.u64(p->mask().seed());
    } else {
      w.u32(kPlainBody);
      w.u8(static_cast<std::uint8_t>(kind));
      w.u8(0);
    }
  }
  for (const Layer& layer : net.layers())
    if (const MaskedParameters* p = parameters_of(layer)) w.bytes(layer_payload(*p));
  auto& buf = w.buffer();
  const std::uint32_t crc = crc32_of(std::span(buf).subspan(sizeof kMagic));
  w.u32(crc);
  return std::move(buf);
}

namespace {

struct LayerDescriptor {
  LayerKind kind;
  bool frozen;
  std::uint32_t out = 0, in = 0, k = 0, stride = 0, pad = 0;
  double connectivity = 1.0;
  std::uint64_t mask_seed = 0;
};

MaskedParameters decode_params(std::span<const std::uint8_t> payload, const Shape& wshape,
                               const LayerDescriptor& d) {
  Reader r(payload);
  const auto packed = r.bytes((wshape.numel() + 7) / 8);
  ConnectivityMask mask = [&] {
    try {
      return ConnectivityMask::unpack(wshape, packed, d.mask_seed);
    } catch (const Error& e) {
      malformed(e.what());
    }
  }();
  Tensor weights(wshape);
  for (double& v : weights.data()) v = r.f64();
  Tensor bias(Shape{d.out});
  for (double& v : bias.data()) v = r.f64();
  for (std::size_t i = 0; i < weights.numel(); ++i)
    if (!mask[i] && weights[i] != 0.0) malformed("masked-out weight is non-zero");
  for (double v : weights.data())
    if (!std::isfinite(v)) malformed("non-finite weight");
  for (double v : bias.data())
    if (!std::isfinite(v)) malformed("non-finite bias");
  MaskedParameters p(std::move(weights), std::move(bias), std::move(mask), d.connectivity);
  p.set_frozen(d.frozen);
  return p;
}

Shape weight_shape(const LayerDescriptor& d) {
  try {
    return d.kind == LayerKind::kConv ? Shape{d.out, d.in, d.k, d.k} : Shape{d.out, d.in};
  } catch (const ShapeError& e) {
    malformed(e.what());
  }
}

std::size_t payload_size(const Shape& wshape, std::size_t bias) {
  const std::size_t n = wshape.numel();
  if (n > (std::size_t{1} << 40)) malformed("layer too large");
  return (n + 7) / 8 + 8 * n + 8 * bias;
}

}  // namespace

Network deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic)
    throw CheckpointError(CheckpointErrorCode::kTruncated, "checkpoint shorter than its magic");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw CheckpointError(CheckpointErrorCode::kBadMagic, "not a checkpoint (bad magic)");
  Reader r(bytes.subspan(sizeof kMagic));
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrorCode::kVersionMismatch,
                          "checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));

  const std::uint32_t in_c = r.u32(), in_h = r.u32(), in_w = r.u32(), classes = r.u32();
  const double connectivity = r.f64();
  const std::uint64_t seed = r.u64();
  const std::uint32_t count = r.u32();

  std::vector<LayerDescriptor> descriptors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t body = r.u32();
    const std::size_t start = r.pos();
    LayerDescriptor d{static_cast<LayerKind>(r.u8()), r.u8() != 0};
    switch (d.kind) {
      case LayerKind::kConv:
        d.out = r.u32(), d.in = r.u32(), d.k = r.u32(), d.stride = r.u32(), d.pad = r.u32();
        d.connectivity = r.f64(), d.mask_seed = r.u64();
        break;
      case LayerKind::kDense:
        d.out = r.u32(), d.in = r.u32();
        d.connectivity = r.f64(), d.mask_seed = r.u64();
        break;
      case LayerKind::kMaxPool2:
      case LayerKind::kRelu:
      case LayerKind::kFlatten:
        break;
      default:
        malformed("unknown layer kind " + std::to_string(static_cast<int>(d.kind)));
    }
    if (r.pos() - start != body) malformed("layer record " + std::to_string(i) + " length mismatch");
    descriptors.push_back(d);
  }

  // Payload extents follow from the descriptor alone, so a short file is
  // reported as truncated and a damaged payload as a checksum failure before
  // any of it is interpreted.
  std::vector<std::span<const std::uint8_t>> payloads;
  for (const LayerDescriptor& d : descriptors)
    if (d.kind == LayerKind::kConv || d.kind == LayerKind::kDense)
      payloads.push_back(r.bytes(payload_size(weight_shape(d), d.out)));

  const std::size_t body_end = sizeof kMagic + r.pos();
  const std::uint32_t stored_crc = r.u32();
  if (bytes.size() != body_end + 4)
    malformed(std::to_string(bytes.size() - body_end - 4) + " trailing bytes");
  const std::uint32_t actual_crc = crc32_of(bytes.subspan(sizeof kMagic, body_end - sizeof kMagic));
  if (stored_crc != actual_crc)
    throw CheckpointError(CheckpointErrorCode::kChecksumMismatch, "checkpoint checksum mismatch");

  try {
    std::vector<Layer> layers;
    std::size_t next_payload = 0;
    for (const LayerDescriptor& d : descriptors) {
      switch (d.kind) {
        case LayerKind::kConv:
          layers.emplace_back(SparseConvLayer(
              decode_params(payloads[next_payload++], weight_shape(d), d), d.stride, d.pad));
          break;
        case LayerKind::kDense:
          layers.emplace_back(
              SparseDenseLayer(decode_params(payloads[next_payload++], weight_shape(d), d)));
          break;
        case LayerKind::kMaxPool2: layers.emplace_back(MaxPool2{}); break;
        case LayerKind::kRelu: layers.emplace_back(Relu{}); break;
        case LayerKind::kFlatten: layers.emplace_back(Flatten{}); break;
      }
    }
    return Network(Shape{in_c, in_h, in_w}, classes, std::move(layers), connectivity, seed);
  } catch (const ShapeError& e) {
    malformed(e.what());
  } catch (const ValueError& e) {
    malformed(e.what());
  }
}

void save(const Network& net, const std::filesystem::path& path) {
  const auto bytes = serialize(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorCode::kIo, "write failed for " + path.string());
}

Network load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorCode::kIo, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return deserialize(bytes);
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw Error("digest", "SHA-256 computation failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string layer_digest(const Network& net, std::size_t layer_index) {
  const MaskedParameters* p = parameters_of(net.layers().at(layer_index));
  if (!p) throw ValueError("layer " + std::to_string(layer_index) + " has no parameters");
  return sha256_hex(layer_payload(*p));
}

}  // namespace stochnet
