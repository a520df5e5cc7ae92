#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "stochnet/tensor.hpp"

namespace stochnet {

class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error("data", message) {}
};

// Labelled images in [0, 1], NCHW.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
  std::vector<std::size_t> class_counts() const;

  // Throws DataError unless every invariant holds.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

Dataset make_dataset(Tensor images, std::vector<int> labels, std::size_t num_classes);

// Samples at `indices`, in that order.
Dataset gather(const Dataset& d, std::span<const std::size_t> indices);

// Copies samples [begin, end) into a batch tensor and label vector.
void extract_batch(const Dataset& d, std::span<const std::size_t> order, std::size_t begin,
                   std::size_t end, Tensor& images, std::vector<int>& labels);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

// One label byte followed by channel-planar, row-major pixels. The CIFAR-10
// binary layout is the case channels = 3, hw = 32 (3073-byte records).
Dataset read_label_first_records(const std::filesystem::path& path, std::size_t channels,
                                 std::size_t hw, std::size_t num_classes);
void write_label_first_records(const std::filesystem::path& path, const Dataset& d);

struct Cifar10Options {
  // 0 disables the per-file record-count check.
  std::size_t records_per_file = 10000;
};

// data_batch_{1..5}.bin and test_batch.bin under `dir`.
TrainTestSplit load_cifar10(const std::filesystem::path& dir, Cifar10Options options = {});

struct Stl10Options {
  // 0 disables the count checks.
  std::size_t expected_train = 5000;
  std::size_t expected_test = 8000;
};

// train_X.bin / train_y.bin / test_X.bin / test_y.bin under `dir`. Images are
// stored column-major per channel plane and transposed here; labels 1..10
// become 0..9.
TrainTestSplit load_stl10(const std::filesystem::path& dir, Stl10Options options = {});
Dataset read_stl10_pair(const std::filesystem::path& images, const std::filesystem::path& labels);

// floor(fraction * count_c) samples per class, drawn by a seeded shuffle.
// The result is ordered by a seeded permutation as well.
Dataset subsample_stratified(const Dataset& d, double fraction, std::uint64_t seed);
// floor(fraction * n) samples drawn uniformly without regard to class.
Dataset subsample_uniform(const Dataset& d, double fraction, std::uint64_t seed);

// Averages non-overlapping factor x factor blocks.
Dataset resize_box(const Dataset& d, std::size_t factor);

// Deterministic Fisher-Yates permutation of [0, n).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace stochnet
