#include "stochnet/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "stochnet/random.hpp"

namespace stochnet {
namespace {

enum Shape2D : int { kHBar, kVBar, kDiagDown, kDiagUp, kCorner, kBlob, kRing, kBox, kShapeCount };

// Coverage in [0, 1] of shape `kind` with half-extent `s` at offset (dy, dx).
double coverage(int kind, double dy, double dx, double s) {
  constexpr double kHalfStroke = 1.1;
  const double ady = std::abs(dy), adx = std::abs(dx);
  auto soft = [](double dist, double half) { return std::clamp(half + 0.5 - dist, 0.0, 1.0); };
  const bool inside = ady <= s + 0.5 && adx <= s + 0.5;
  switch (kind) {
    case kHBar: return adx <= s + 0.5 ? soft(ady, kHalfStroke) : 0.0;
    case kVBar: return ady <= s + 0.5 ? soft(adx, kHalfStroke) : 0.0;
    case kDiagDown: return inside ? soft(std::abs(dy - dx) / std::sqrt(2.0), kHalfStroke) : 0.0;
    case kDiagUp: return inside ? soft(std::abs(dy + dx) / std::sqrt(2.0), kHalfStroke) : 0.0;
    case kCorner: {
      if (!inside) return 0.0;
      const double vertical = soft(std::abs(dx + s - kHalfStroke), kHalfStroke);
      const double horizontal = soft(std::abs(dy - s + kHalfStroke), kHalfStroke);
      return std::max(vertical, horizontal);
    }
    case kBlob: {
      const double sd = 0.45 * s;
      return std::exp(-(dy * dy + dx * dx) / (2.0 * sd * sd));
    }
    case kRing: return soft(std::abs(std::hypot(dy, dx) - 0.8 * s), 0.9);
    case kBox: return inside ? soft(std::abs(std::max(ady, adx) - (s - 0.6)), 0.9) : 0.0;
    default: return 0.0;
  }
}

using ShapePair = std::pair<int, int>;

// All unordered pairs of distinct shapes, in a seeded order.
std::vector<ShapePair> shuffled_pairs(std::uint64_t seed) {
  std::vector<ShapePair> pairs;
  for (int a = 0; a < kShapeCount; ++a)
    for (int b = a + 1; b < kShapeCount; ++b) pairs.emplace_back(a, b);
  const auto perm = seeded_permutation(pairs.size(), seed);
  std::vector<ShapePair> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) out[i] = pairs[perm[i]];
  return out;
}

struct DomainStyle {
  double noise_floor;   // background noise amplitude
  double contrast_min;  // lowest stroke intensity
};

Dataset render_split(const SyntheticConfig& cfg, const std::vector<ShapePair>& class_pairs,
                     const DomainStyle& style, std::size_t per_class, CounterStream stream) {
  const std::size_t n = per_class * cfg.num_classes;
  const std::size_t hw = cfg.image_hw, ch = cfg.channels;
  Tensor images(Shape{n, ch, hw, hw});
  std::vector<int> labels(n);
  const double quarter = static_cast<double>(hw) / 4.0;
  std::vector<double> canvas(hw * hw);

  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<int>(i % cfg.num_classes);
    labels[i] = label;
    const CounterStream rng = stream.child(i);
    std::uint64_t draw = 0;
    auto u = [&] { return rng.uniform(draw++); };

    // Two distinct quadrants; the pair order is randomised too.
    const std::size_t q0 = rng.below(draw++, 4);
    const std::size_t q1 = (q0 + 1 + rng.below(draw++, 3)) % 4;
    ShapePair pair = class_pairs[static_cast<std::size_t>(label)];
    if (u() < 0.5) std::swap(pair.first, pair.second);

    std::array<double, 3> tint_a{}, tint_b{};
    for (std::size_t c = 0; c < 3; ++c) tint_a[c] = 0.7 + 0.3 * u();
    for (std::size_t c = 0; c < 3; ++c) tint_b[c] = 0.7 + 0.3 * u();

    struct Stroke {
      int kind;
      double cy, cx, s, amp;
      std::array<double, 3> tint;
    };
    std::array<Stroke, 2> strokes{};
    const std::size_t quads[2] = {q0, q1};
    const int kinds[2] = {pair.first, pair.second};
    for (int k = 0; k < 2; ++k) {
      const double qy = (quads[k] / 2 == 0 ? 1.0 : 3.0) * quarter;
      const double qx = (quads[k] % 2 == 0 ? 1.0 : 3.0) * quarter;
      const double jitter = 0.3 * quarter;
      strokes[k].kind = kinds[k];
      strokes[k].cy = qy + (2.0 * u() - 1.0) * jitter - 0.5;
      strokes[k].cx = qx + (2.0 * u() - 1.0) * jitter - 0.5;
      strokes[k].s = quarter * (0.65 + 0.3 * u());
      strokes[k].amp = style.contrast_min + (1.0 - style.contrast_min) * u();
      strokes[k].tint = k == 0 ? tint_a : tint_b;
    }

    for (std::size_t c = 0; c < ch; ++c) {
      double* plane = images.data().data() + (i * ch + c) * hw * hw;
      for (std::size_t y = 0; y < hw; ++y) {
        for (std::size_t x = 0; x < hw; ++x) {
          double v = style.noise_floor * u();
          for (const Stroke& st : strokes) {
            const double cov = coverage(st.kind, static_cast<double>(y) - st.cy,
                                        static_cast<double>(x) - st.cx, st.s);
            v = std::max(v, cov * st.amp * st.tint[c % 3]);
          }
          plane[y * hw + x] = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
        }
      }
    }
  }
  return make_dataset(std::move(images), std::move(labels), cfg.num_classes);
}

}  // namespace

SyntheticDomains generate_synthetic_domains(const SyntheticConfig& cfg) {
  if (cfg.n_per_class == 0 || cfg.test_per_class == 0 || cfg.num_classes == 0 || cfg.channels == 0)
    throw DataError("synthetic sizes must be positive");
  constexpr std::size_t kPairs = kShapeCount * (kShapeCount - 1) / 2;
  if (2 * cfg.num_classes > kPairs)
    throw DataError("synthetic generator supports at most " + std::to_string(kPairs / 2) +
                    " classes");
  if (cfg.image_hw < 8) throw DataError("synthetic images must be at least 8x8");

  const CounterStream root(cfg.seed);
  const auto pairs = shuffled_pairs(root.bits(0));
  const std::vector<ShapePair> source_pairs(pairs.begin(), pairs.begin() + cfg.num_classes);
  const std::vector<ShapePair> target_pairs(pairs.begin() + cfg.num_classes,
                                            pairs.begin() + 2 * cfg.num_classes);
  const DomainStyle source_style{0.25, 0.55};
  const DomainStyle target_style{0.30, 0.50};

  return {render_split(cfg, source_pairs, source_style, cfg.n_per_class, root.child(1)),
          render_split(cfg, source_pairs, source_style, cfg.test_per_class, root.child(2)),
          render_split(cfg, target_pairs, target_style, cfg.n_per_class, root.child(3)),
          render_split(cfg, target_pairs, target_style, cfg.test_per_class, root.child(4))};
}

}  // namespace stochnet
