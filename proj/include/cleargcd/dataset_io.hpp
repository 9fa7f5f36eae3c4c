#pragma once

// On-disk dataset: meta.json + images.bin (LE float32, C x H x W per sample)
// + labels.bin (LE int32 per sample).

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleargcd/binary_io.hpp"
#include "cleargcd/datagen.hpp"
#include "json.hpp"

namespace cleargcd {

inline constexpr int kDatasetFormatVersion = 1;

struct SplitParams {
  double known_fraction = 0.5;
  double labeled_fraction = 0.5;
  std::uint64_t seed = 0;
};

struct StoredDataset {
  Dataset dataset;
  GcdSplit split;
  SplitParams split_params;
};

inline nlohmann::json spec_to_json(const ShortcutSpec& s) {
  return {{"height", s.height},
          {"width", s.width},
          {"channels", s.channels},
          {"num_known_classes", s.num_known_classes},
          {"num_novel_classes", s.num_novel_classes},
          {"samples_per_class", s.samples_per_class},
          {"shortcut_strength", s.shortcut_strength},
          {"glyph_noise", s.glyph_noise},
          {"seed", s.seed}};
}

inline ShortcutSpec spec_from_json(const nlohmann::json& j) {
  ShortcutSpec s;
  s.height = j.at("height");
  s.width = j.at("width");
  s.channels = j.at("channels");
  s.num_known_classes = j.at("num_known_classes");
  s.num_novel_classes = j.at("num_novel_classes");
  s.samples_per_class = j.at("samples_per_class");
  s.shortcut_strength = j.at("shortcut_strength");
  s.glyph_noise = j.at("glyph_noise");
  s.seed = j.at("seed");
  return s;
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds, const GcdSplit& split,
                          const SplitParams& params) {
  std::filesystem::create_directories(dir);
  std::vector<bool> labeled(ds.samples.size(), false);
  for (std::size_t i : split.labeled_index) labeled[i] = true;

  nlohmann::json meta;
  meta["format_version"] = kDatasetFormatVersion;
  meta["spec"] = spec_to_json(ds.spec);
  meta["num_samples"] = ds.samples.size();
  meta["classes"] = split.all_classes;
  meta["known_classes"] = split.known_classes;
  meta["K"] = split.K;
  meta["split"] = {{"known_fraction", params.known_fraction},
                   {"labeled_fraction", params.labeled_fraction},
                   {"seed", params.seed}};
  std::vector<int> lab_flags, bgs;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    lab_flags.push_back(labeled[i] ? 1 : 0);
    bgs.push_back(ds.samples[i].background_id);
  }
  meta["is_labeled"] = lab_flags;
  meta["background_ids"] = bgs;
  write_text(dir / "meta.json", meta.dump() + "\n");

  std::vector<float> pixels;
  pixels.reserve(ds.samples.size() * ds.spec.pixels());
  std::vector<std::int32_t> labels;
  for (const Sample& s : ds.samples) {
    for (double v : s.image.data()) pixels.push_back(static_cast<float>(v));
    labels.push_back(s.label);
  }
  write_le_blob(dir / "images.bin", pixels);
  write_le_blob(dir / "labels.bin", labels);
}

inline StoredDataset read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed " + (dir / "meta.json").string() + ": " + e.what());
  }
  const int version = meta.value("format_version", -1);
  if (version != kDatasetFormatVersion)
    throw std::runtime_error("unsupported dataset format version " + std::to_string(version) + " in " +
                             dir.string());

  StoredDataset out;
  try {
    out.dataset.spec = spec_from_json(meta.at("spec"));
    const std::size_t n = meta.at("num_samples");
    const auto pixels = read_le_blob<float>(dir / "images.bin");
    const auto labels = read_le_blob<std::int32_t>(dir / "labels.bin");
    const std::vector<int> lab_flags = meta.at("is_labeled");
    const std::vector<int> bgs = meta.at("background_ids");
    const std::size_t px = out.dataset.spec.pixels();
    if (pixels.size() != n * px || labels.size() != n || lab_flags.size() != n || bgs.size() != n)
      throw std::runtime_error("dataset files in " + dir.string() + " disagree on sample count");
    const auto& sp = out.dataset.spec;
    for (std::size_t i = 0; i < n; ++i) {
      Sample s;
      s.image = Tensor({sp.channels, sp.height, sp.width});
      for (std::size_t k = 0; k < px; ++k) s.image[k] = static_cast<double>(pixels[i * px + k]);
      s.label = labels[i];
      s.background_id = bgs[i];
      s.is_labeled = lab_flags[i] != 0;
      out.dataset.samples.push_back(s);
      if (s.is_labeled) {
        out.split.labeled.push_back(std::move(s));
        out.split.labeled_index.push_back(i);
      } else {
        out.split.unlabeled.push_back(std::move(s));
        out.split.unlabeled_index.push_back(i);
      }
    }
    out.split.known_classes = meta.at("known_classes").get<std::vector<int>>();
    out.split.all_classes = meta.at("classes").get<std::vector<int>>();
    out.split.K = meta.at("K");
    const auto& j = meta.at("split");
    out.split_params = {j.at("known_fraction"), j.at("labeled_fraction"), j.at("seed")};
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed dataset metadata in " + dir.string() + ": " + e.what());
  }
  return out;
}

}  // namespace cleargcd
