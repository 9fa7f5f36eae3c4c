#pragma once

// End-to-end runs (generate, split, train, evaluate) and ablation sweeps.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cleargcd/config.hpp"
#include "cleargcd/datagen.hpp"
#include "cleargcd/eval.hpp"
#include "cleargcd/trainer.hpp"
#include "json.hpp"

namespace cleargcd {

struct PreparedData {
  Dataset dataset;
  GcdSplit split;
};

inline PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData d;
  d.dataset = generate_dataset(cfg.data.spec);
  d.split = make_gcd_split(d.dataset, cfg.data.known_fraction, cfg.data.labeled_fraction, cfg.data.split_seed);
  return d;
}

/// Evaluation sets for D_u: the clean samples (first probe_size, or all)
/// and their background-swapped copies.
struct EvalSets {
  std::vector<Sample> clean, swapped;
};

inline EvalSets make_eval_sets(const RunConfig& cfg, const ShortcutSpec& spec, const GcdSplit& split, bool probe_only) {
  EvalSets s;
  const std::size_t n = probe_only && cfg.eval.probe_size > 0 ? std::min(cfg.eval.probe_size, split.unlabeled.size())
                                                                : split.unlabeled.size();
  s.clean.assign(split.unlabeled.begin(), split.unlabeled.begin() + static_cast<std::ptrdiff_t>(n));
  s.swapped = swap_backgrounds(s.clean, spec, cfg.eval.swap_seed);
  return s;
}

inline ProbeFn make_probe(const RunConfig& cfg, const EvalSets& sets, const std::vector<int>& known) {
  return [&cfg, &sets, known](const Model& m) {
    const EvalReport r = evaluate(m, sets.clean, sets.swapped, cfg.loss.tau_s, known);
    return ProbeResult{r.acc_all, r.acc_old, r.acc_new, r.shortcut_gap};
  };
}

struct ExperimentResult {
  EvalReport report;
  TrainResult train;
};

inline ExperimentResult run_experiment(const RunConfig& cfg, const StepObserver& on_step = nullptr) {
  const PreparedData data = prepare_data(cfg);
  const EvalSets probe_sets = make_eval_sets(cfg, data.dataset.spec, data.split, true);
  ExperimentResult out;
  out.train = train_run(cfg, training_view(data.split), make_probe(cfg, probe_sets, data.split.known_classes), on_step);
  const EvalSets full = make_eval_sets(cfg, data.dataset.spec, data.split, false);
  out.report = evaluate(out.train.model, full.clean, full.swapped, cfg.loss.tau_s, data.split.known_classes);
  return out;
}

// ---- ablation ------------------------------------------------------------

struct SweepSpec {
  std::string axis;  // "components", "replace_count" or "beta"
  std::vector<nlohmann::json> values;
  std::vector<std::uint64_t> seeds;
};

struct AblationSetting {
  std::string name;
  RunConfig config;
};

inline SweepSpec parse_sweep(const nlohmann::json& j) {
  SweepSpec s;
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "axis" && it.key() != "values" && it.key() != "seeds")
      throw ConfigError("unknown sweep key sweep." + it.key());
  if (!j.contains("axis") || !j["axis"].is_string()) throw ConfigError("sweep.axis: required string");
  s.axis = j["axis"];
  if (s.axis != "components" && s.axis != "replace_count" && s.axis != "beta")
    throw ConfigError("sweep.axis: unknown axis '" + s.axis + "'");
  if (j.contains("values")) {
    if (!j["values"].is_array()) throw ConfigError("sweep.values: expected an array");
    for (const auto& v : j["values"]) s.values.push_back(v);
  }
  if (s.axis == "components" && s.values.empty())
    s.values = {"baseline", "sva", "ssr", "full"};
  if (s.values.empty()) throw ConfigError("sweep.values: required for axis " + s.axis);
  try {
    s.seeds = j.value("seeds", std::vector<std::uint64_t>{0});
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("sweep.seeds: expected an array of non-negative integers");
  }
  if (s.seeds.empty()) throw ConfigError("sweep.seeds: must not be empty");
  return s;
}

/// Applies one seed to data generation, split and training.
inline RunConfig with_seed(RunConfig c, std::uint64_t seed) {
  c.data.spec.seed = seed;
  c.data.split_seed = seed;
  c.train.seed = seed;
  return c;
}

inline std::vector<AblationSetting> expand_sweep(const RunConfig& base, const SweepSpec& sweep) {
  std::vector<AblationSetting> out;
  for (const auto& v : sweep.values) {
    RunConfig c = base;
    std::string name;
    if (sweep.axis == "components") {
      if (!v.is_string()) throw ConfigError("sweep.values: component names must be strings");
      name = v.get<std::string>();
      if (name == "baseline") {
        c.sva.enabled = false;
        c.ssr.enabled = false;
      } else if (name == "sva") {
        c.sva.enabled = true;
        c.ssr.enabled = false;
      } else if (name == "ssr") {
        c.sva.enabled = false;
        c.ssr.enabled = true;
      } else if (name == "full") {
        c.sva.enabled = true;
        c.ssr.enabled = true;
      } else {
        throw ConfigError("sweep.values: unknown component setting '" + name + "'");
      }
    } else if (sweep.axis == "replace_count") {
      if (!v.is_number_integer()) throw ConfigError("sweep.values: replace_count values must be integers");
      c.sva.mask.replace_count = v.get<int>();
      try {
        c.sva.mask.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("sweep.values: ") + e.what());
      }
      name = "m=" + std::to_string(c.sva.mask.replace_count);
    } else {
      if (!v.is_number() || v.get<double>() < 0.0) throw ConfigError("sweep.values: beta values must be >= 0");
      c.loss.beta = v.get<double>();
      std::ostringstream os;
      os << "beta=" << c.loss.beta;
      name = os.str();
    }
    out.push_back({name, c});
  }
  return out;
}

struct AblationRow {
  std::string setting;
  std::string seed;
  double acc_all = 0.0, acc_old = 0.0, acc_new = 0.0, shortcut_gap = 0.0;
};

/// Number of worker threads from CLEARGCD_THREADS (default 1).
inline unsigned thread_budget() {
  const char* env = std::getenv("CLEARGCD_THREADS");
  if (!env) return 1;
  const long v = std::strtol(env, nullptr, 10);
  return v >= 1 ? static_cast<unsigned>(v) : 1u;
}

/// Runs every (setting, seed) cell and appends per-setting mean rows.
inline std::vector<AblationRow> run_ablation(const RunConfig& base, const SweepSpec& sweep,
                                             const std::function<void(const AblationRow&)>& on_cell = nullptr) {
  const auto settings = expand_sweep(base, sweep);
  struct Cell {
    std::size_t setting;
    std::uint64_t seed;
    AblationRow row;
  };
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < settings.size(); ++s)
    for (auto seed : sweep.seeds) cells.push_back({s, seed, {}});

  auto run_cell = [&](Cell& cell) {
    const auto r = run_experiment(with_seed(settings[cell.setting].config, cell.seed)).report;
    cell.row = {settings[cell.setting].name, std::to_string(cell.seed), r.acc_all, r.acc_old, r.acc_new, r.shortcut_gap};
  };
  const unsigned workers = std::min<unsigned>(thread_budget(), static_cast<unsigned>(cells.size()));
  if (workers <= 1) {
    for (auto& c : cells) {
      run_cell(c);
      if (on_cell) on_cell(c.row);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(cells[i]);
      });
    for (auto& th : pool) th.join();
    if (on_cell)
      for (auto& c : cells) on_cell(c.row);
  }

  std::vector<AblationRow> rows;
  for (std::size_t s = 0; s < settings.size(); ++s) {
    AblationRow mean{settings[s].name, "mean"};
    double n = 0.0;
    for (const auto& c : cells) {
      if (c.setting != s) continue;
      rows.push_back(c.row);
      mean.acc_all += c.row.acc_all;
      mean.acc_old += c.row.acc_old;
      mean.acc_new += c.row.acc_new;
      mean.shortcut_gap += c.row.shortcut_gap;
      n += 1.0;
    }
    mean.acc_all /= n;
    mean.acc_old /= n;
    mean.acc_new /= n;
    mean.shortcut_gap /= n;
    rows.push_back(mean);
  }
  return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "setting,seed,acc_all,acc_old,acc_new,shortcut_gap\n";
  os << std::setprecision(17);
  for (const auto& r : rows)
    os << r.setting << ',' << r.seed << ',' << r.acc_all << ',' << r.acc_old << ',' << r.acc_new << ','
       << r.shortcut_gap << '\n';
  return os.str();
}

}  // namespace cleargcd
