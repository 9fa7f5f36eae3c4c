#pragma once

// Weak views and cross-class patch replacement for the strong view.

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleargcd/tensor.hpp"

namespace cleargcd {

struct WeakDraw {
  bool flip = false;
  int shift_y = 0;  // crop offset relative to the unpadded frame, in [-pad, pad]
  int shift_x = 0;
  double brightness = 0.0;
};

inline constexpr int kCropPad = 2;
inline constexpr double kBrightnessJitter = 0.1;

inline WeakDraw draw_weak(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution flip(0.5);
  std::uniform_int_distribution<int> shift(-kCropPad, kCropPad);
  std::uniform_real_distribution<double> jitter(-kBrightnessJitter, kBrightnessJitter);
  WeakDraw d;
  d.flip = flip(rng);
  d.shift_y = shift(rng);
  d.shift_x = shift(rng);
  d.brightness = jitter(rng);
  return d;
}

/// Flip, pad-then-crop with edge replication, additive brightness, clamp.
inline Tensor weak_augment(const Tensor& x, const WeakDraw& d) {
  if (x.shape().size() != 3) throw ShapeError("weak_augment expects C x H x W, got " + shape_str(x.shape()));
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  Tensor out(x.shape());
  const auto clamp_idx = [](long v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(n) - 1));
  };
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t col = 0; col < W; ++col) {
        const std::size_t sr = clamp_idx(static_cast<long>(r) + d.shift_y, H);
        std::size_t sc = clamp_idx(static_cast<long>(col) + d.shift_x, W);
        if (d.flip) sc = W - 1 - sc;
        out[(c * H + r) * W + col] = std::clamp(x[(c * H + sr) * W + sc] + d.brightness, 0.0, 1.0);
      }
  return out;
}

inline Tensor weak_augment(const Tensor& x, std::uint64_t seed) { return weak_augment(x, draw_weak(seed)); }

/// g x g patch grid; `protected_cells` are never replaced.
struct MaskSpec {
  int grid = 4;
  int replace_count = 4;
  std::vector<int> protected_cells;  // row-major cell ids; empty = central half

  /// Cells covering the central half of the frame.
  static std::vector<int> central_cells(int grid) {
    std::vector<int> cells;
    for (int r = grid / 4; r < 3 * grid / 4; ++r)
      for (int c = grid / 4; c < 3 * grid / 4; ++c) cells.push_back(r * grid + c);
    return cells;
  }

  std::vector<int> protected_set() const { return protected_cells.empty() ? central_cells(grid) : protected_cells; }
  int available() const { return grid * grid - static_cast<int>(protected_set().size()); }

  void validate() const {
    if (grid < 1) throw std::invalid_argument("mask grid must be >= 1");
    for (int c : protected_set())
      if (c < 0 || c >= grid * grid) throw std::invalid_argument("protected cell " + std::to_string(c) + " outside grid");
    if (replace_count < 1 || replace_count > available())
      throw std::invalid_argument("replace_count " + std::to_string(replace_count) + " must lie in [1, " +
                                  std::to_string(available()) + "]");
  }
};

/// H x W mask, 1 keeps the source pixel. Constant within each grid cell.
inline Tensor sample_mask(const MaskSpec& spec, std::size_t height, std::size_t width, std::uint64_t seed) {
  spec.validate();
  const auto g = static_cast<std::size_t>(spec.grid);
  if (height % g != 0 || width % g != 0)
    throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) +
                     " not divisible by mask grid " + std::to_string(g));
  const auto prot = spec.protected_set();
  const std::set<int> guarded(prot.begin(), prot.end());
  std::vector<int> open;
  for (int c = 0; c < spec.grid * spec.grid; ++c)
    if (!guarded.count(c)) open.push_back(c);
  std::mt19937_64 rng(seed);
  std::shuffle(open.begin(), open.end(), rng);
  std::vector<bool> replaced(g * g, false);
  for (int k = 0; k < spec.replace_count; ++k) replaced[static_cast<std::size_t>(open[static_cast<std::size_t>(k)])] = true;

  Tensor m({height, width}, 1.0);
  const std::size_t ch = height / g, cw = width / g;
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c)
      if (replaced[(r / ch) * g + c / cw]) m(r, c) = 0.0;
  return m;
}

/// M * x_i + (1 - M) * x_j with the H x W mask broadcast over channels.
inline Tensor sva_patch_replace(const Tensor& xi, const Tensor& xj, const Tensor& mask) {
  if (xi.shape() != xj.shape())
    throw ShapeError("patch replace shape mismatch: " + shape_str(xi.shape()) + " vs " + shape_str(xj.shape()));
  if (xi.shape().size() != 3 || mask.shape().size() != 2 || mask.shape()[0] != xi.shape()[1] ||
      mask.shape()[1] != xi.shape()[2])
    throw ShapeError("patch replace shape mismatch: " + shape_str(xi.shape()) + " vs mask " + shape_str(mask.shape()));
  const std::size_t plane = mask.numel();
  Tensor out(xi.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double m = mask[i % plane];
    out[i] = m * xi[i] + (1.0 - m) * xj[i];
  }
  return out;
}

struct SvaPair {
  std::size_t source = 0;  // batch position receiving the strong view
  std::size_t donor = 0;   // batch position supplying the replaced patches
};

/// Pairs a seeded half of the batch with donors of a different (pseudo-)label.
/// Returns no pairs when every label in the batch is identical.
inline std::vector<SvaPair> make_sva_pairs(const std::vector<int>& labels, std::uint64_t seed) {
  if (labels.size() < 2) throw std::invalid_argument("SVA pairing needs a batch of at least 2");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) {
    std::clog << "warning: all labels in batch identical, SVA skipped\n";
    return {};
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<SvaPair> pairs;
  const std::size_t half = labels.size() / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const std::size_t i = order[k];
    std::vector<std::size_t> donors;
    for (std::size_t j = 0; j < labels.size(); ++j)
      if (labels[j] != labels[i]) donors.push_back(j);
    std::uniform_int_distribution<std::size_t> pick(0, donors.size() - 1);
    pairs.push_back({i, donors[pick(rng)]});
  }
  return pairs;
}

}  // namespace cleargcd
