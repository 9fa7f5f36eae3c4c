#pragma once

// Run configuration: one JSON document, strictly validated, every knob
// defaulted and echoed back in resolved form.

#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleargcd/augment.hpp"
#include "cleargcd/binary_io.hpp"
#include "cleargcd/datagen.hpp"
#include "cleargcd/losses.hpp"
#include "cleargcd/prototype_bank.hpp"
#include "json.hpp"

namespace cleargcd {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  ShortcutSpec spec;
  double known_fraction = 0.5;
  double labeled_fraction = 0.5;
  std::uint64_t split_seed = 0;
};

struct ModelConfig {
  std::size_t hidden = 256;
  std::size_t feature = 64;
  std::size_t projection = 32;
};

struct SvaConfig {
  bool enabled = true;
  MaskSpec mask;
  bool kl_as_printed = false;
};

struct TrainSection {
  int epochs = 30;
  std::size_t batch_size = 64;
  double labeled_fraction = 0.5;
  double lr = 0.1;
  double min_lr = 1e-4;
  double momentum = 0.9;
  bool cosine = true;
  std::uint64_t seed = 0;
  bool record_wall_time = false;
  std::string checkpoint_dir = "checkpoint";
  std::string metrics_file = "metrics.jsonl";
};

struct EvalConfig {
  std::uint64_t swap_seed = 12345;
  std::size_t probe_size = 0;  // 0: all of D_u
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  LossWeights loss;
  SvaConfig sva;
  BankSettings ssr;
  TrainSection train;
  EvalConfig eval;
};

namespace detail {

// Reads keys from one JSON object, remembering which were consumed so the
// leftovers can be reported as unknown.
class SectionReader {
 public:
  SectionReader(const nlohmann::json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key " + path_ + "." + it.key());
  }

  std::string at(const char* key) const { return path_ + "." + key; }

 private:
  const nlohmann::json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path + ": " + what);
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& root) {
  using detail::require;
  using detail::SectionReader;
  RunConfig c;
  SectionReader top(root, "config");
  const nlohmann::json empty = nlohmann::json::object();
  auto section = [&](const char* name) -> const nlohmann::json& {
    const nlohmann::json* j = top.child(name);
    return j ? *j : empty;
  };

  {
    SectionReader r(section("data"), "data");
    auto& s = c.data.spec;
    r.read("height", s.height);
    r.read("width", s.width);
    r.read("channels", s.channels);
    r.read("num_known_classes", s.num_known_classes);
    r.read("num_novel_classes", s.num_novel_classes);
    r.read("samples_per_class", s.samples_per_class);
    r.read("shortcut_strength", s.shortcut_strength);
    r.read("glyph_noise", s.glyph_noise);
    r.read("seed", s.seed);
    r.read("known_fraction", c.data.known_fraction);
    r.read("labeled_fraction", c.data.labeled_fraction);
    r.read("split_seed", c.data.split_seed);
    r.finish();
    require(s.shortcut_strength >= 0.0 && s.shortcut_strength <= 1.0, r.at("shortcut_strength"), "must lie in [0,1]");
    require(s.num_known_classes >= 1, r.at("num_known_classes"), "must be >= 1");
    require(s.num_novel_classes >= 1, r.at("num_novel_classes"), "must be >= 1");
    require(s.num_classes() <= kMaxClasses, r.at("num_novel_classes"), "too many classes in total");
    require(s.samples_per_class >= 1, r.at("samples_per_class"), "must be >= 1");
    require(s.glyph_noise >= 0.0, r.at("glyph_noise"), "must be non-negative");
    require(s.channels == 3, r.at("channels"), "must be 3");
    require(s.height % 4 == 0 && s.height >= 8, r.at("height"), "must be a multiple of 4, >= 8");
    require(s.width % 4 == 0 && s.width >= 8, r.at("width"), "must be a multiple of 4, >= 8");
    require(c.data.known_fraction > 0.0 && c.data.known_fraction < 1.0, r.at("known_fraction"), "must lie in (0,1)");
    require(c.data.labeled_fraction > 0.0 && c.data.labeled_fraction < 1.0, r.at("labeled_fraction"),
            "must lie in (0,1)");
  }
  {
    SectionReader r(section("model"), "model");
    r.read("hidden", c.model.hidden);
    r.read("feature", c.model.feature);
    r.read("projection", c.model.projection);
    r.finish();
    require(c.model.hidden >= 1, r.at("hidden"), "must be >= 1");
    require(c.model.feature >= 1, r.at("feature"), "must be >= 1");
    require(c.model.projection >= 1, r.at("projection"), "must be >= 1");
  }
  {
    SectionReader r(section("loss"), "loss");
    auto& w = c.loss;
    r.read("lambda", w.lambda);
    r.read("epsilon", w.epsilon);
    r.read("alpha", w.alpha);
    r.read("beta", w.beta);
    r.read("tau_u", w.tau_u);
    r.read("tau_c", w.tau_c);
    r.read("tau_s", w.tau_s);
    r.read("tau_t", w.tau_t);
    r.read("include_positive_in_denominator", w.include_positive_in_denominator);
    r.finish();
    for (auto [k, t] : {std::pair<const char*, double>{"tau_u", w.tau_u}, {"tau_c", w.tau_c}, {"tau_s", w.tau_s},
                        {"tau_t", w.tau_t}})
      require(t > 0.0, r.at(k), "must be positive");
    require(w.lambda >= 0.0 && w.lambda <= 1.0, r.at("lambda"), "must lie in [0,1]");
    require(w.alpha >= 0.0, r.at("alpha"), "must be non-negative");
    require(w.beta >= 0.0, r.at("beta"), "must be non-negative");
  }
  {
    SectionReader r(section("sva"), "sva");
    r.read("enabled", c.sva.enabled);
    r.read("grid", c.sva.mask.grid);
    r.read("replace_count", c.sva.mask.replace_count);
    r.read("protected_cells", c.sva.mask.protected_cells);
    r.read("kl_as_printed", c.sva.kl_as_printed);
    r.finish();
    try {
      c.sva.mask.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("sva: ") + e.what());
    }
    require(c.data.spec.height % static_cast<std::size_t>(c.sva.mask.grid) == 0 &&
                c.data.spec.width % static_cast<std::size_t>(c.sva.mask.grid) == 0,
            r.at("grid"), "must divide the image size");
    c.loss.kl_as_printed = c.sva.kl_as_printed;
  }
  {
    SectionReader r(section("ssr"), "ssr");
    auto& b = c.ssr;
    r.read("enabled", b.enabled);
    r.read("tau_ssr", b.tau_ssr);
    r.read("refresh_every_epochs", b.refresh_every_epochs);
    r.read("warmup_epochs", b.warmup_epochs);
    r.read("ema", b.ema);
    r.read("ema_momentum", b.ema_momentum);
    r.read("threshold_routing", b.threshold_routing);
    r.read("routing_threshold", b.routing_threshold);
    r.finish();
    require(b.tau_ssr > 0.0, r.at("tau_ssr"), "must be positive");
    require(b.refresh_every_epochs >= 1, r.at("refresh_every_epochs"), "must be >= 1");
    require(b.warmup_epochs >= 0, r.at("warmup_epochs"), "must be >= 0");
    require(b.ema_momentum >= 0.0 && b.ema_momentum < 1.0, r.at("ema_momentum"), "must lie in [0,1)");
    require(b.routing_threshold >= 0.0 && b.routing_threshold <= 1.0, r.at("routing_threshold"), "must lie in [0,1]");
  }
  {
    SectionReader r(section("train"), "train");
    auto& t = c.train;
    r.read("epochs", t.epochs);
    r.read("batch_size", t.batch_size);
    r.read("labeled_fraction", t.labeled_fraction);
    r.read("lr", t.lr);
    r.read("min_lr", t.min_lr);
    r.read("momentum", t.momentum);
    r.read("cosine", t.cosine);
    r.read("seed", t.seed);
    r.read("record_wall_time", t.record_wall_time);
    r.read("checkpoint_dir", t.checkpoint_dir);
    r.read("metrics_file", t.metrics_file);
    r.finish();
    require(t.epochs >= 0, r.at("epochs"), "must be >= 0");
    require(t.batch_size >= 4 && t.batch_size % 2 == 0, r.at("batch_size"), "must be even and >= 4");
    require(t.labeled_fraction > 0.0 && t.labeled_fraction < 1.0, r.at("labeled_fraction"), "must lie in (0,1)");
    require(t.lr >= 0.0, r.at("lr"), "must be non-negative");
    require(t.min_lr >= 0.0, r.at("min_lr"), "must be non-negative");
    require(t.momentum >= 0.0 && t.momentum < 1.0, r.at("momentum"), "must lie in [0,1)");
    require(!t.checkpoint_dir.empty(), r.at("checkpoint_dir"), "must not be empty");
    require(!t.metrics_file.empty(), r.at("metrics_file"), "must not be empty");
  }
  {
    SectionReader r(section("eval"), "eval");
    r.read("swap_seed", c.eval.swap_seed);
    r.read("probe_size", c.eval.probe_size);
    r.finish();
  }
  top.finish();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_config(j);
}

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& s = c.data.spec;
  const auto& w = c.loss;
  const auto& b = c.ssr;
  const auto& t = c.train;
  return {
      {"data",
       {{"height", s.height},
        {"width", s.width},
        {"channels", s.channels},
        {"num_known_classes", s.num_known_classes},
        {"num_novel_classes", s.num_novel_classes},
        {"samples_per_class", s.samples_per_class},
        {"shortcut_strength", s.shortcut_strength},
        {"glyph_noise", s.glyph_noise},
        {"seed", s.seed},
        {"known_fraction", c.data.known_fraction},
        {"labeled_fraction", c.data.labeled_fraction},
        {"split_seed", c.data.split_seed}}},
      {"model", {{"hidden", c.model.hidden}, {"feature", c.model.feature}, {"projection", c.model.projection}}},
      {"loss",
       {{"lambda", w.lambda},
        {"epsilon", w.epsilon},
        {"alpha", w.alpha},
        {"beta", w.beta},
        {"tau_u", w.tau_u},
        {"tau_c", w.tau_c},
        {"tau_s", w.tau_s},
        {"tau_t", w.tau_t},
        {"include_positive_in_denominator", w.include_positive_in_denominator}}},
      {"sva",
       {{"enabled", c.sva.enabled},
        {"grid", c.sva.mask.grid},
        {"replace_count", c.sva.mask.replace_count},
        {"protected_cells", c.sva.mask.protected_set()},
        {"kl_as_printed", c.sva.kl_as_printed}}},
      {"ssr",
       {{"enabled", b.enabled},
        {"tau_ssr", b.tau_ssr},
        {"refresh_every_epochs", b.refresh_every_epochs},
        {"warmup_epochs", b.warmup_epochs},
        {"ema", b.ema},
        {"ema_momentum", b.ema_momentum},
        {"threshold_routing", b.threshold_routing},
        {"routing_threshold", b.routing_threshold}}},
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"labeled_fraction", t.labeled_fraction},
        {"lr", t.lr},
        {"min_lr", t.min_lr},
        {"momentum", t.momentum},
        {"cosine", t.cosine},
        {"seed", t.seed},
        {"record_wall_time", t.record_wall_time},
        {"checkpoint_dir", t.checkpoint_dir},
        {"metrics_file", t.metrics_file}}},
      {"eval", {{"swap_seed", c.eval.swap_seed}, {"probe_size", c.eval.probe_size}}},
  };
}

/// FNV-1a over the compact resolved config, hex encoded.
inline std::string config_hash(const RunConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : to_json(c).dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

}  // namespace cleargcd
