#pragma once

#include <cstdint>

#include "stochnet/data.hpp"

namespace stochnet {

struct SyntheticConfig {
  std::size_t n_per_class = 200;     // training samples per class, per domain
  std::size_t test_per_class = 50;   // test samples per class, per domain
  std::size_t num_classes = 10;      // at most 14 (two disjoint pair sets of 8 shapes)
  std::size_t image_hw = 32;
  std::size_t channels = 3;
  std::uint64_t seed = 0;
};

struct SyntheticDomains {
  Dataset source_train;
  Dataset source_test;
  Dataset target_train;
  Dataset target_test;
};

// Two labelled domains drawn from one alphabet of eight stroke shapes (bars,
// diagonals, corner, blob, ring, box). A class is an unordered pair of shapes
// placed in two distinct quadrants with jittered position, size, contrast
// and colour, over noise. Source and target use disjoint sets of pairs, so
// low-level detectors carry over while class semantics do not. Pixels are
// multiples of 1/255, so the byte-record export round-trips exactly.
SyntheticDomains generate_synthetic_domains(const SyntheticConfig& config);

}  // namespace stochnet
