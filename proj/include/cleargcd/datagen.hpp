#pragma once

// Synthetic planted-shortcut images and the labeled/unlabeled GCD split.
//
// Each image is a class-specific grayscale glyph occupying the central half
// of the frame, surrounded by a colored background. Background ids
// 0..num_known_classes-1 are linked to the known classes; with probability
// rho a known-class sample shows its own background, so the background is a
// shortcut on labeled data but carries no class information for novel
// classes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleargcd/tensor.hpp"

namespace cleargcd {

inline constexpr int kMaxClasses = 20;

struct ShortcutSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  int num_known_classes = 5;
  int num_novel_classes = 5;
  int samples_per_class = 200;
  double shortcut_strength = 0.95;
  double glyph_noise = 0.1;
  std::uint64_t seed = 0;

  int num_classes() const { return num_known_classes + num_novel_classes; }
  int num_backgrounds() const { return num_known_classes; }
  std::size_t pixels() const { return channels * height * width; }

  void validate() const {
    if (!(shortcut_strength >= 0.0 && shortcut_strength <= 1.0))
      throw std::invalid_argument("shortcut_strength must lie in [0,1]");
    if (num_known_classes < 1) throw std::invalid_argument("num_known_classes must be >= 1");
    if (num_novel_classes < 1) throw std::invalid_argument("num_novel_classes must be >= 1");
    if (num_classes() > kMaxClasses)
      throw std::invalid_argument("at most " + std::to_string(kMaxClasses) + " classes are supported");
    if (samples_per_class <= 0) throw std::invalid_argument("samples_per_class must be positive");
    if (height % 4 != 0 || width % 4 != 0 || height < 8 || width < 8)
      throw std::invalid_argument("image height and width must be multiples of 4 and >= 8");
    if (channels != 3) throw std::invalid_argument("channels must be 3");
    if (!(glyph_noise >= 0.0)) throw std::invalid_argument("glyph_noise must be non-negative");
  }
};

struct Sample {
  Tensor image;  // C x H x W in [0,1]
  int label = 0;
  int background_id = 0;
  bool is_labeled = false;
};

struct Dataset {
  ShortcutSpec spec;
  std::vector<Sample> samples;
};

/// Central glyph region: rows [H/4, 3H/4) x cols [W/4, 3W/4).
struct GlyphRegion {
  std::size_t top, left, height, width;

  static GlyphRegion of(const ShortcutSpec& s) { return {s.height / 4, s.width / 4, s.height / 2, s.width / 2}; }
  bool contains(std::size_t r, std::size_t c) const {
    return r >= top && r < top + height && c >= left && c < left + width;
  }
};

namespace detail {

// Binary pattern for glyph `cls` at local coordinates (u, v) of a size x size
// patch. Families 0..9 depend only on the distance from the patch centre,
// so horizontal flips preserve them, and their strokes are at least 3 px
// wide on a 16 px patch so a 2 px crop shift moves edges only. Classes
// 10..19 use the inverted patterns.
inline bool glyph_bit(int cls, std::size_t u, std::size_t v, std::size_t size) {
  const double s = static_cast<double>(size) / 16.0;
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  const double du = std::abs(static_cast<double>(u) - c) / s;
  const double dv = std::abs(static_cast<double>(v) - c) / s;
  bool bit = false;
  switch (cls % 10) {
    case 0: bit = du < 3.0; break;                     // horizontal bar
    case 1: bit = dv < 3.0; break;                     // vertical bar
    case 2: bit = du < 2.0 || dv < 2.0; break;         // plus
    case 3: bit = std::abs(du - dv) < 2.0; break;      // X
    case 4: bit = std::max(du, dv) < 4.0; break;       // filled square
    case 5: bit = std::max(du, dv) >= 5.0; break;      // frame
    case 6: bit = (du < 4.0) != (dv < 4.0); break;     // 3x3 checker
    case 7: bit = du + dv < 6.0; break;                // diamond
    case 8: bit = du >= 3.0 && du < 6.0; break;        // two horizontal bars
    default: bit = dv >= 3.0 && dv < 6.0; break;       // two vertical bars
  }
  return (cls / 10) % 2 ? !bit : bit;
}

inline std::array<double, 3> background_color(int id, int count) {
  // Evenly spaced hues, fixed saturation/value.
  const double h = 6.0 * static_cast<double>(id) / static_cast<double>(count);
  const double v = 0.85, s = 0.75;
  const double chroma = v * s;
  const double x = chroma * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  const double m = v - chroma;
  std::array<double, 3> rgb{};
  switch (static_cast<int>(h) % 6) {
    case 0: rgb = {chroma, x, 0}; break;
    case 1: rgb = {x, chroma, 0}; break;
    case 2: rgb = {0, chroma, x}; break;
    case 3: rgb = {0, x, chroma}; break;
    case 4: rgb = {x, 0, chroma}; break;
    default: rgb = {chroma, 0, x}; break;
  }
  for (double& ch : rgb) ch += m;
  return rgb;
}

inline double quantize(double v) { return static_cast<double>(static_cast<float>(std::clamp(v, 0.0, 1.0))); }

// Flat color plus a random linear ramp per channel, then pixel noise. Only
// pixels outside the glyph region are written.
inline void paint_background(Tensor& img, int bg, const ShortcutSpec& spec, std::mt19937_64& rng) {
  const auto color = background_color(bg, spec.num_backgrounds());
  const auto region = GlyphRegion::of(spec);
  std::normal_distribution<double> ramp(0.0, 0.08), offset(0.0, 0.04), noise(0.0, spec.glyph_noise);
  const std::size_t H = spec.height, W = spec.width;
  for (std::size_t ch = 0; ch < spec.channels; ++ch) {
    const double gy = ramp(rng), gx = ramp(rng), base = color[ch] + offset(rng);
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c) {
        if (region.contains(r, c)) continue;
        const double y = static_cast<double>(r) / static_cast<double>(H - 1) - 0.5;
        const double x = static_cast<double>(c) / static_cast<double>(W - 1) - 0.5;
        const double n = spec.glyph_noise > 0.0 ? noise(rng) : 0.0;
        img[(ch * H + r) * W + c] = quantize(base + gy * y + gx * x + n);
      }
  }
}

inline void paint_glyph(Tensor& img, int cls, const ShortcutSpec& spec, std::mt19937_64& rng) {
  const auto region = GlyphRegion::of(spec);
  std::normal_distribution<double> noise(0.0, spec.glyph_noise);
  const std::size_t H = spec.height, W = spec.width;
  for (std::size_t ch = 0; ch < spec.channels; ++ch)
    for (std::size_t u = 0; u < region.height; ++u)
      for (std::size_t v = 0; v < region.width; ++v) {
        const double level = glyph_bit(cls, u, v, region.height) ? 0.85 : 0.15;
        const double n = spec.glyph_noise > 0.0 ? noise(rng) : 0.0;
        img[(ch * H + region.top + u) * W + region.left + v] = quantize(level + n);
      }
}

}  // namespace detail

/// Known class c shows background c with probability rho and otherwise a
/// background drawn uniformly from the whole pool; novel classes always draw
/// uniformly from the pool.
inline Dataset generate_dataset(const ShortcutSpec& spec) {
  spec.validate();
  Dataset ds{spec, {}};
  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution linked(spec.shortcut_strength);
  std::uniform_int_distribution<int> any_bg(0, spec.num_backgrounds() - 1);
  ds.samples.reserve(static_cast<std::size_t>(spec.num_classes() * spec.samples_per_class));
  for (int cls = 0; cls < spec.num_classes(); ++cls) {
    for (int i = 0; i < spec.samples_per_class; ++i) {
      Sample s;
      s.label = cls;
      const bool known = cls < spec.num_known_classes;
      s.background_id = known && linked(rng) ? cls : any_bg(rng);
      s.image = Tensor({spec.channels, spec.height, spec.width});
      detail::paint_glyph(s.image, cls, spec, rng);
      detail::paint_background(s.image, s.background_id, spec, rng);
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

/// Redraws every background from the ids linked to other classes. Glyph
/// pixels are copied unchanged.
inline std::vector<Sample> swap_backgrounds(const std::vector<Sample>& samples, const ShortcutSpec& spec,
                                            std::uint64_t seed) {
  const int nb = spec.num_backgrounds();
  if (nb < 2) throw std::invalid_argument("swap_backgrounds needs at least 2 background ids, have " + std::to_string(nb));
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    Sample t = s;
    std::vector<int> choices;
    for (int b = 0; b < nb; ++b)
      if (b != s.label) choices.push_back(b);
    std::uniform_int_distribution<std::size_t> pick(0, choices.size() - 1);
    t.background_id = choices[pick(rng)];
    detail::paint_background(t.image, t.background_id, spec, rng);
    out.push_back(std::move(t));
  }
  return out;
}

struct GcdSplit {
  std::vector<Sample> labeled;    // D_l
  std::vector<Sample> unlabeled;  // D_u, ground truth kept for evaluation
  std::vector<std::size_t> labeled_index;    // positions in the source dataset
  std::vector<std::size_t> unlabeled_index;
  std::vector<int> known_classes;  // Y_l, sorted
  std::vector<int> all_classes;    // Y_u, sorted
  int K = 0;

  bool is_known(int cls) const { return std::binary_search(known_classes.begin(), known_classes.end(), cls); }
};

/// Selects Y_l as the first ceil(known_fraction * K) ids of a seeded class
/// shuffle and moves labeled_fraction of each known class into D_l. The
/// shuffle orders shortcut-linked classes ahead of the others so the planted
/// background pool always belongs to the known set when the counts agree.
inline GcdSplit make_gcd_split(const Dataset& ds, double known_fraction, double labeled_fraction,
                               std::uint64_t seed) {
  if (!(known_fraction > 0.0 && known_fraction < 1.0))
    throw std::invalid_argument("known_fraction must lie in (0,1)");
  if (!(labeled_fraction > 0.0 && labeled_fraction < 1.0))
    throw std::invalid_argument("labeled_fraction must lie in (0,1)");
  std::set<int> present;
  for (const Sample& s : ds.samples) present.insert(s.label);
  if (present.empty()) throw std::invalid_argument("dataset is empty");

  std::mt19937_64 rng(seed);
  std::vector<int> linked, rest;
  for (int c : present) (c < ds.spec.num_known_classes ? linked : rest).push_back(c);
  std::shuffle(linked.begin(), linked.end(), rng);
  std::shuffle(rest.begin(), rest.end(), rng);
  std::vector<int> order = linked;
  order.insert(order.end(), rest.begin(), rest.end());

  const auto n_known = static_cast<std::size_t>(std::ceil(known_fraction * static_cast<double>(order.size()) - 1e-9));
  if (n_known < 1 || n_known >= order.size())
    throw std::invalid_argument("split must leave at least one known and one novel class");

  GcdSplit split;
  split.known_classes.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_known));
  std::sort(split.known_classes.begin(), split.known_classes.end());
  split.all_classes.assign(present.begin(), present.end());
  split.K = static_cast<int>(split.all_classes.size());

  std::vector<bool> to_labeled(ds.samples.size(), false);
  for (int c : split.known_classes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      if (ds.samples[i].label == c) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_lab = static_cast<std::size_t>(std::floor(labeled_fraction * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < n_lab; ++k) to_labeled[members[k]] = true;
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    Sample s = ds.samples[i];
    s.is_labeled = to_labeled[i];
    if (s.is_labeled) {
      split.labeled.push_back(std::move(s));
      split.labeled_index.push_back(i);
    } else {
      split.unlabeled.push_back(std::move(s));
      split.unlabeled_index.push_back(i);
    }
  }
  for (int c : split.known_classes)
    if (std::none_of(split.labeled.begin(), split.labeled.end(), [c](const Sample& s) { return s.label == c; }))
      throw std::invalid_argument("known class " + std::to_string(c) + " received no labeled samples");
  return split;
}

/// What the trainer may see: labels for D_l only.
struct TrainView {
  std::vector<const Tensor*> labeled_images;
  std::vector<int> labels;
  std::vector<const Tensor*> unlabeled_images;
  std::vector<int> known_classes;
  int K = 0;
};

inline TrainView training_view(const GcdSplit& split) {
  TrainView v;
  for (const Sample& s : split.labeled) {
    v.labeled_images.push_back(&s.image);
    v.labels.push_back(s.label);
  }
  for (const Sample& s : split.unlabeled) v.unlabeled_images.push_back(&s.image);
  v.known_classes = split.known_classes;
  v.K = split.K;
  return v;
}

}  // namespace cleargcd
