#include "stochnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "stochnet/random.hpp"

namespace stochnet {

namespace fs = std::filesystem;

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int l : labels) ++counts.at(static_cast<std::size_t>(l));
  return counts;
}

void Dataset::validate() const {
  if (images.shape().rank() != 4) throw DataError("dataset images must be [n, c, h, w]");
  if (images.dim(0) != labels.size())
    throw DataError("dataset has " + std::to_string(images.dim(0)) + " images but " +
                    std::to_string(labels.size()) + " labels");
  if (num_classes == 0) throw DataError("dataset needs at least one class");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
      throw DataError("label " + std::to_string(l) + " outside [0, " +
                      std::to_string(num_classes) + ")");
  for (double v : images.data())
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("pixel value outside [0, 1]");
}

Dataset make_dataset(Tensor images, std::vector<int> labels, std::size_t num_classes) {
  Dataset d{std::move(images), std::move(labels), num_classes};
  d.validate();
  return d;
}

Dataset gather(const Dataset& d, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("cannot gather an empty dataset");
  const std::size_t per = d.images.numel() / d.size();
  Tensor images(Shape{indices.size(), d.channels(), d.height(), d.width()});
  std::vector<int> labels(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= d.size()) throw DataError("gather index out of range");
    std::copy_n(d.images.data().begin() + src * per, per, images.data().begin() + i * per);
    labels[i] = d.labels[src];
  }
  return Dataset{std::move(images), std::move(labels), d.num_classes};
}

void extract_batch(const Dataset& d, std::span<const std::size_t> order, std::size_t begin,
                   std::size_t end, Tensor& images, std::vector<int>& labels) {
  const std::size_t per = d.images.numel() / d.size();
  const std::size_t count = end - begin;
  if (images.shape().rank() != 4 || images.dim(0) != count)
    images = Tensor(Shape{count, d.channels(), d.height(), d.width()});
  labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t src = order.empty() ? begin + i : order[begin + i];
    std::copy_n(d.images.data().begin() + src * per, per, images.data().begin() + i * per);
    labels[i] = d.labels[src];
  }
}

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset read_label_first_records(const fs::path& path, std::size_t channels, std::size_t hw,
                                 std::size_t num_classes) {
  const auto bytes = read_file(path);
  const std::size_t pixels = channels * hw * hw;
  const std::size_t record = pixels + 1;
  if (bytes.size() % record != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % record;
    throw DataError(path.string() + ": truncated record at byte offset " +
                    std::to_string(offset) + " (record size " + std::to_string(record) + ")");
  }
  const std::size_t n = bytes.size() / record;
  if (n == 0) throw DataError(path.string() + ": no records");
  Tensor images(Shape{n, channels, hw, hw});
  std::vector<int> labels(n);
  auto out = images.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * record;
    if (rec[0] >= num_classes)
      throw DataError(path.string() + ": label " + std::to_string(rec[0]) +
                      " out of range at byte offset " + std::to_string(i * record));
    labels[i] = rec[0];
    for (std::size_t p = 0; p < pixels; ++p) out[i * pixels + p] = rec[1 + p] / 255.0;
  }
  return Dataset{std::move(images), std::move(labels), num_classes};
}

void write_label_first_records(const fs::path& path, const Dataset& d) {
  const std::size_t pixels = d.images.numel() / d.size();
  std::vector<std::uint8_t> bytes;
  bytes.reserve(d.size() * (pixels + 1));
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.labels[i] > 255) throw DataError("label does not fit a byte");
    bytes.push_back(static_cast<std::uint8_t>(d.labels[i]));
    for (std::size_t p = 0; p < pixels; ++p) {
      const double v = d.images[i * pixels + p] * 255.0;
      bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

namespace {

Dataset concat(std::vector<Dataset> parts) {
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  const Dataset& first = parts.front();
  Tensor images(Shape{n, first.channels(), first.height(), first.width()});
  std::vector<int> labels;
  labels.reserve(n);
  auto out = images.data().begin();
  for (const auto& p : parts) {
    out = std::copy(p.images.data().begin(), p.images.data().end(), out);
    labels.insert(labels.end(), p.labels.begin(), p.labels.end());
  }
  return Dataset{std::move(images), std::move(labels), first.num_classes};
}

}  // namespace

TrainTestSplit load_cifar10(const fs::path& dir, Cifar10Options options) {
  auto load = [&](const std::string& name) {
    const fs::path path = dir / name;
    if (!fs::exists(path)) throw DataError("missing CIFAR-10 file " + path.string());
    Dataset d = read_label_first_records(path, 3, 32, 10);
    if (options.records_per_file != 0 && d.size() != options.records_per_file)
      throw DataError(path.string() + ": expected " + std::to_string(options.records_per_file) +
                      " records, found " + std::to_string(d.size()));
    return d;
  };
  std::vector<Dataset> parts;
  for (int b = 1; b <= 5; ++b) parts.push_back(load("data_batch_" + std::to_string(b) + ".bin"));
  return {concat(std::move(parts)), load("test_batch.bin")};
}

namespace {

constexpr std::size_t kStlSide = 96;
constexpr std::size_t kStlChannels = 3;
constexpr std::size_t kStlImageBytes = kStlSide * kStlSide * kStlChannels;

}  // namespace

Dataset read_stl10_pair(const fs::path& image_path, const fs::path& label_path) {
  const auto image_bytes = read_file(image_path);
  const auto label_bytes = read_file(label_path);
  if (image_bytes.size() % kStlImageBytes != 0)
    throw DataError(image_path.string() + ": size " + std::to_string(image_bytes.size()) +
                    " is not a multiple of " + std::to_string(kStlImageBytes));
  const std::size_t n = image_bytes.size() / kStlImageBytes;
  if (n != label_bytes.size())
    throw DataError("STL-10 size mismatch: " + std::to_string(n) + " images vs " +
                    std::to_string(label_bytes.size()) + " labels");
  if (n == 0) throw DataError(image_path.string() + ": no images");
  Tensor images(Shape{n, kStlChannels, kStlSide, kStlSide});
  std::vector<int> labels(n);
  auto out = images.data();
  const std::size_t plane = kStlSide * kStlSide;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t l = label_bytes[i];
    if (l < 1 || l > 10)
      throw DataError(label_path.string() + ": label " + std::to_string(l) +
                      " outside 1..10 at byte offset " + std::to_string(i));
    labels[i] = l - 1;
    for (std::size_t c = 0; c < kStlChannels; ++c) {
      const std::uint8_t* src = image_bytes.data() + i * kStlImageBytes + c * plane;
      double* dst = out.data() + i * kStlImageBytes + c * plane;
      // Source plane is column-major: byte (x * 96 + y) holds pixel (y, x).
      for (std::size_t y = 0; y < kStlSide; ++y)
        for (std::size_t x = 0; x < kStlSide; ++x)
          dst[y * kStlSide + x] = src[x * kStlSide + y] / 255.0;
    }
  }
  return Dataset{std::move(images), std::move(labels), 10};
}

TrainTestSplit load_stl10(const fs::path& dir, Stl10Options options) {
  for (const char* f : {"train_X.bin", "train_y.bin", "test_X.bin", "test_y.bin"})
    if (!fs::exists(dir / f)) throw DataError("missing STL-10 file " + (dir / f).string());
  TrainTestSplit split{read_stl10_pair(dir / "train_X.bin", dir / "train_y.bin"),
                       read_stl10_pair(dir / "test_X.bin", dir / "test_y.bin")};
  if (options.expected_train != 0 && split.train.size() != options.expected_train)
    throw DataError("STL-10 train: expected " + std::to_string(options.expected_train) +
                    " images, found " + std::to_string(split.train.size()));
  if (options.expected_test != 0 && split.test.size() != options.expected_test)
    throw DataError("STL-10 test: expected " + std::to_string(options.expected_test) +
                    " images, found " + std::to_string(split.test.size()));
  return split;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  const CounterStream stream(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = stream.below(n - i, i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

namespace {

void check_fraction(double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw DataError("fraction must lie in (0, 1], got " + std::to_string(fraction));
}

std::size_t fraction_of(double fraction, std::size_t count) {
  // Guard against 0.2 * 500 landing on 99.999...
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(count) + 1e-9));
}

}  // namespace

Dataset subsample_stratified(const Dataset& d, double fraction, std::uint64_t seed) {
  check_fraction(fraction);
  const CounterStream root(seed);
  std::vector<std::vector<std::size_t>> by_class(d.num_classes);
  for (std::size_t i = 0; i < d.size(); ++i)
    by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < d.num_classes; ++c) {
    const auto& members = by_class[c];
    const std::size_t take = fraction_of(fraction, members.size());
    if (take == 0)
      throw DataError("fraction " + std::to_string(fraction) + " leaves class " +
                      std::to_string(c) + " empty (" + std::to_string(members.size()) +
                      " samples)");
    const auto perm = seeded_permutation(members.size(), root.bits(c));
    for (std::size_t i = 0; i < take; ++i) chosen.push_back(members[perm[i]]);
  }
  const auto order = seeded_permutation(chosen.size(), root.bits(d.num_classes));
  std::vector<std::size_t> indices(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) indices[i] = chosen[order[i]];
  return gather(d, indices);
}

Dataset subsample_uniform(const Dataset& d, double fraction, std::uint64_t seed) {
  check_fraction(fraction);
  const std::size_t take = fraction_of(fraction, d.size());
  if (take == 0) throw DataError("fraction leaves the dataset empty");
  const auto perm = seeded_permutation(d.size(), seed);
  return gather(d, std::span(perm).first(take));
}

Dataset resize_box(const Dataset& d, std::size_t factor) {
  if (factor == 0 || d.height() % factor != 0 || d.width() % factor != 0)
    throw DataError("image size " + std::to_string(d.height()) + "x" + std::to_string(d.width()) +
                    " not divisible by factor " + std::to_string(factor));
  if (factor == 1) return d;
  const std::size_t n = d.size(), c = d.channels();
  const std::size_t h = d.height() / factor, w = d.width() / factor;
  Tensor out(Shape{n, c, h, w});
  const auto area = static_cast<double>(factor * factor);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double acc = 0.0;
          for (std::size_t dy = 0; dy < factor; ++dy)
            for (std::size_t dx = 0; dx < factor; ++dx)
              acc += d.images.at(i, ch, y * factor + dy, x * factor + dx);
          out.at(i, ch, y, x) = acc / area;
        }
  return Dataset{std::move(out), d.labels, d.num_classes};
}

}  // namespace stochnet
