#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cleargcd/cleargcd.hpp"
#include "cleargcd/gradsuite.hpp"

namespace fs = std::filesystem;
using namespace cleargcd;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

void echo_config(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
}

int cmd_gen_data(const std::string& config_path, const fs::path& out) {
  const RunConfig cfg = load_config(config_path);
  const PreparedData data = prepare_data(cfg);
  write_dataset(out, data.dataset, data.split,
                SplitParams{cfg.data.known_fraction, cfg.data.labeled_fraction, cfg.data.split_seed});
  echo_config(out, cfg);
  std::cout << "wrote " << data.dataset.samples.size() << " samples to " << out.string() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const fs::path& data_dir, const fs::path& out, bool no_sva,
              bool no_ssr) {
  RunConfig cfg = load_config(config_path);
  if (no_sva) cfg.sva.enabled = false;
  if (no_ssr) cfg.ssr.enabled = false;
  if (!fs::is_directory(data_dir)) throw std::runtime_error("data directory not found: " + data_dir.string());
  const StoredDataset stored = read_dataset(data_dir);
  const EvalSets probe = make_eval_sets(cfg, stored.dataset.spec, stored.split, true);
  const TrainResult res = train_run(cfg, training_view(stored.split), make_probe(cfg, probe, stored.split.known_classes));

  echo_config(out, cfg);
  nlohmann::json extra;
  extra["config"] = to_json(cfg);
  extra["config_hash"] = config_hash(cfg);
  extra["known_classes"] = stored.split.known_classes;
  save_checkpoint(out / cfg.train.checkpoint_dir, res.model, extra);
  write_metrics(out / cfg.train.metrics_file, res.metrics);
  const auto& last = res.metrics.back();
  std::cout << "trained " << cfg.train.epochs << " epochs; probe acc_all " << last["probe_all"].get<double>()
            << ", shortcut_gap " << last["shortcut_gap"].get<double>() << "\n";
  return 0;
}

int cmd_eval(const fs::path& ckpt_dir, const fs::path& data_dir, const fs::path& out) {
  if (!fs::is_directory(ckpt_dir)) throw std::runtime_error("checkpoint directory not found: " + ckpt_dir.string());
  const LoadedCheckpoint ck = load_checkpoint(ckpt_dir);
  RunConfig cfg;
  try {
    cfg = parse_config(ck.meta.at("config"));
  } catch (const std::exception& e) {
    throw std::runtime_error("corrupt checkpoint config in " + ckpt_dir.string() + ": " + e.what());
  }
  if (!fs::is_directory(data_dir)) throw std::runtime_error("data directory not found: " + data_dir.string());
  const StoredDataset stored = read_dataset(data_dir);
  if (static_cast<std::size_t>(stored.split.K) != ck.model.dims().num_classes ||
      stored.dataset.spec.pixels() != ck.model.dims().input)
    throw std::runtime_error("checkpoint " + ckpt_dir.string() + " does not match dataset " + data_dir.string());
  const EvalSets sets = make_eval_sets(cfg, stored.dataset.spec, stored.split, false);
  const EvalReport r = evaluate(ck.model, sets.clean, sets.swapped, cfg.loss.tau_s, stored.split.known_classes);
  nlohmann::json j = r.to_json();
  j["config_hash"] = config_hash(cfg);
  j["checkpoint"] = ckpt_dir.string();
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, j.dump(2) + "\n");
  std::cout << std::fixed << std::setprecision(4) << "acc_all " << r.acc_all << "  acc_old " << r.acc_old
            << "  acc_new " << r.acc_new << "  shortcut_gap " << r.shortcut_gap << "\n";
  return 0;
}

int cmd_gradcheck(const GradSuiteOptions& opt) {
  const auto entries = run_gradient_suite(opt);
  bool ok = true;
  std::cout << std::left << std::setw(56) << "loss" << std::setw(12) << "instances" << std::setw(16)
            << "max_rel_err" << "result\n";
  for (const auto& e : entries) {
    ok = ok && e.passed();
    std::ostringstream err;
    err << std::scientific << std::setprecision(2) << e.max_rel_error;
    std::cout << std::setw(56) << e.name << std::setw(12) << e.instances << std::setw(16) << err.str()
              << (e.passed() ? "PASS" : "FAIL (" + std::to_string(e.failed_instances) + " instances)") << "\n";
  }
  return ok ? 0 : kExitRuntime;
}

int cmd_ablate(const std::string& config_path, const std::string& sweep_path, const fs::path& out) {
  const RunConfig base = load_config(config_path);
  nlohmann::json sj;
  try {
    sj = nlohmann::json::parse(read_text(sweep_path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(sweep_path + ": invalid JSON: " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  const SweepSpec sweep = parse_sweep(sj);
  expand_sweep(base, sweep);  // surface value errors before any training
  const auto rows = run_ablation(base, sweep, [](const AblationRow& r) {
    std::cout << r.setting << " seed " << r.seed << ": acc_all " << r.acc_all << " acc_new " << r.acc_new
              << " gap " << r.shortcut_gap << std::endl;
  });
  echo_config(out, base);
  write_text(out / "sweep.json", sj.dump(2) + "\n");
  write_text(out / "ablation.csv", ablation_csv(rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shortcut-suppressed generalized category discovery on synthetic data"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 1 runtime error, 2 config or usage error.\n"
             "CLEARGCD_THREADS caps parallel ablation cells (default 1).");

  std::string config, sweep;
  fs::path out, data, checkpoint;
  bool no_sva = false, no_ssr = false;
  GradSuiteOptions gopt;

  auto* gen = app.add_subcommand("gen-data", "Generate the planted-shortcut dataset and its split");
  gen->add_option("--config", config, "Run config JSON")->required();
  gen->add_option("--out", out, "Output dataset directory")->required();

  auto* train = app.add_subcommand("train", "Train a model and write checkpoint/ and metrics.jsonl");
  train->add_option("--config", config, "Run config JSON")->required();
  train->add_option("--data", data, "Dataset directory from gen-data")->required();
  train->add_option("--out", out, "Output run directory")->required();
  train->add_flag("--no-sva", no_sva, "Disable semantic view alignment");
  train->add_flag("--no-ssr", no_ssr, "Disable shortcut suppression regularization");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the unlabeled split");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  ev->add_option("--data", data, "Dataset directory from gen-data")->required();
  ev->add_option("--out", out, "Report JSON path")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
  gc->add_option("--instances", gopt.instances, "Random instances per loss")->capture_default_str();
  gc->add_option("--seed", gopt.seed, "Instance seed")->capture_default_str();
  gc->add_option("--tol", gopt.tolerance, "Relative tolerance")->capture_default_str();
  gc->add_flag("--fault-inject", gopt.fault_inject, "Corrupt every backward pass (negative control)");

  auto* ab = app.add_subcommand("ablate", "Run an ablation sweep and write ablation.csv");
  ab->add_option("--config", config, "Base run config JSON")->required();
  ab->add_option("--sweep", sweep, "Sweep spec JSON: {axis, values, seeds}")->required();
  ab->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(config, out);
    if (*train) return cmd_train(config, data, out, no_sva, no_ssr);
    if (*ev) return cmd_eval(checkpoint, data, out);
    if (*gc) return cmd_gradcheck(gopt);
    if (*ab) return cmd_ablate(config, sweep, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
