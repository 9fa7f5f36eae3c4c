#pragma once

// Seeded mini-batch training loop over the full objective.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleargcd/augment.hpp"
#include "cleargcd/config.hpp"
#include "cleargcd/datagen.hpp"
#include "cleargcd/eval.hpp"
#include "cleargcd/losses.hpp"
#include "cleargcd/model.hpp"
#include "cleargcd/prototype_bank.hpp"
#include "json.hpp"

namespace cleargcd {

/// Independent generators so that changing one component's consumption
/// leaves the others' draws untouched.
struct RngStreams {
  std::mt19937_64 data_order;
  std::mt19937_64 augmentation;
  std::mt19937_64 mask;
  std::mt19937_64 init;

  static RngStreams from_seed(std::uint64_t seed) {
    auto make = [seed](std::uint32_t stream) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
      return std::mt19937_64(seq);
    };
    return {make(1), make(2), make(3), make(4)};
  }
};

struct EpochCursor {
  std::vector<std::size_t> labeled_order, unlabeled_order;
  std::size_t labeled_pos = 0, unlabeled_pos = 0;
};

struct RunState {
  long step = 0;
  int epoch = 0;
  std::vector<std::vector<double>> velocity;
  RngStreams rng;
  EpochCursor cursor;
  bool backfill_reported = false;  // the backfill notice is logged once per run
};

inline RunState make_run_state(std::uint64_t seed) {
  RunState s;
  s.rng = RngStreams::from_seed(seed);
  return s;
}

struct BatchViews {
  std::vector<std::size_t> labeled_idx;    // into TrainView::labeled_images
  std::vector<std::size_t> unlabeled_idx;  // into TrainView::unlabeled_images
  std::vector<int> labels;                 // true labels of the labeled rows
  Tensor weak1, weak2;                     // B x pixels; labeled rows first
  std::vector<std::uint64_t> seeds1, seeds2;
  std::vector<SvaPair> pairs;
  Tensor strong;        // one row per pair
  Tensor clean_source;  // un-augmented source image of each pair
  std::size_t backfilled = 0;

  std::size_t size() const { return labeled_idx.size() + unlabeled_idx.size(); }
  std::vector<std::size_t> labeled_rows() const {
    std::vector<std::size_t> r(labeled_idx.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
    return r;
  }
};

/// Steps per epoch: one pass over D_l at ceil(fraction * B) labeled per batch.
inline std::size_t steps_per_epoch(const TrainView& view, const RunConfig& cfg) {
  const auto n_lab = static_cast<std::size_t>(std::ceil(cfg.train.labeled_fraction * static_cast<double>(cfg.train.batch_size)));
  return std::max<std::size_t>(1, (view.labeled_images.size() + n_lab - 1) / n_lab);
}

inline void begin_epoch(RunState& state, const TrainView& view) {
  auto& c = state.cursor;
  c.labeled_order.resize(view.labeled_images.size());
  c.unlabeled_order.resize(view.unlabeled_images.size());
  for (std::size_t i = 0; i < c.labeled_order.size(); ++i) c.labeled_order[i] = i;
  for (std::size_t i = 0; i < c.unlabeled_order.size(); ++i) c.unlabeled_order[i] = i;
  std::shuffle(c.labeled_order.begin(), c.labeled_order.end(), state.rng.data_order);
  std::shuffle(c.unlabeled_order.begin(), c.unlabeled_order.end(), state.rng.data_order);
  c.labeled_pos = c.unlabeled_pos = 0;
}

/// Pseudo-labels for a set of clean images (argmax of the classifier).
using PseudoLabeler = std::function<std::vector<int>(const std::vector<const Tensor*>&)>;

inline PseudoLabeler model_pseudo_labeler(const Model& model, double tau_s) {
  return [&model, tau_s](const std::vector<const Tensor*>& imgs) {
    if (imgs.empty()) return std::vector<int>{};
    return argmax_rows(model.probabilities(imgs, tau_s));
  };
}

/// Draws the next batch: labeled rows without replacement (backfilled from
/// D_u once the labeled pass is exhausted), two weak views per sample and,
/// when SVA is enabled, strong views for a seeded half of the batch.
inline BatchViews compose_batch(const TrainView& view, const RunConfig& cfg, RunState& state,
                                const PseudoLabeler& pseudo) {
  if (view.labeled_images.empty() && view.unlabeled_images.empty()) throw std::invalid_argument("empty training split");
  auto& c = state.cursor;
  if (c.labeled_order.size() != view.labeled_images.size() || c.unlabeled_order.size() != view.unlabeled_images.size())
    begin_epoch(state, view);
  const std::size_t B = cfg.train.batch_size;
  const auto n_lab = std::min(B, static_cast<std::size_t>(std::ceil(cfg.train.labeled_fraction * static_cast<double>(B))));

  BatchViews b;
  while (b.labeled_idx.size() < n_lab && c.labeled_pos < c.labeled_order.size())
    b.labeled_idx.push_back(c.labeled_order[c.labeled_pos++]);
  b.backfilled = n_lab - b.labeled_idx.size();
  if (b.backfilled > 0 && !view.labeled_images.empty() && !state.backfill_reported) {
    std::clog << "info: labeled pool exhausted, backfilling " << b.backfilled
              << " slots from unlabeled data (reported once per run)\n";
    state.backfill_reported = true;
  }
  const std::size_t n_unl = B - b.labeled_idx.size();
  if (view.unlabeled_images.empty() && n_unl > 0) throw std::invalid_argument("no unlabeled samples to fill the batch");
  while (b.unlabeled_idx.size() < n_unl) {
    if (c.unlabeled_pos == c.unlabeled_order.size()) {
      std::clog << "info: unlabeled pool exhausted mid-epoch, reshuffling\n";
      std::shuffle(c.unlabeled_order.begin(), c.unlabeled_order.end(), state.rng.data_order);
      c.unlabeled_pos = 0;
    }
    b.unlabeled_idx.push_back(c.unlabeled_order[c.unlabeled_pos++]);
  }
  for (std::size_t i : b.labeled_idx) b.labels.push_back(view.labels[i]);

  std::vector<const Tensor*> images;
  for (std::size_t i : b.labeled_idx) images.push_back(view.labeled_images[i]);
  for (std::size_t i : b.unlabeled_idx) images.push_back(view.unlabeled_images[i]);
  const std::size_t P = images.front()->numel();

  b.weak1 = Tensor({B, P});
  b.weak2 = Tensor({B, P});
  for (std::size_t r = 0; r < B; ++r) {
    const std::uint64_t s1 = state.rng.augmentation();
    std::uint64_t s2 = state.rng.augmentation();
    while (s2 == s1) s2 = state.rng.augmentation();
    b.seeds1.push_back(s1);
    b.seeds2.push_back(s2);
    const Tensor v1 = weak_augment(*images[r], s1);
    const Tensor v2 = weak_augment(*images[r], s2);
    std::copy(v1.data().begin(), v1.data().end(), b.weak1.row(r).begin());
    std::copy(v2.data().begin(), v2.data().end(), b.weak2.row(r).begin());
  }

  const std::uint64_t pair_seed = state.rng.augmentation();
  if (cfg.sva.enabled) {
    std::vector<int> pair_labels = b.labels;
    std::vector<const Tensor*> unl(images.begin() + static_cast<std::ptrdiff_t>(b.labeled_idx.size()), images.end());
    const auto pl = pseudo(unl);
    pair_labels.insert(pair_labels.end(), pl.begin(), pl.end());
    b.pairs = make_sva_pairs(pair_labels, pair_seed);
  }
  b.strong = Tensor({b.pairs.size(), P});
  b.clean_source = Tensor({b.pairs.size(), P});
  for (std::size_t k = 0; k < b.pairs.size(); ++k) {
    const Tensor& xi = *images[b.pairs[k].source];
    const Tensor& xj = *images[b.pairs[k].donor];
    const Tensor mask = sample_mask(cfg.sva.mask, xi.shape()[1], xi.shape()[2], state.rng.mask());
    const Tensor strong = weak_augment(sva_patch_replace(xi, xj, mask), state.rng.augmentation());
    std::copy(strong.data().begin(), strong.data().end(), b.strong.row(k).begin());
    std::copy(xi.data().begin(), xi.data().end(), b.clean_source.row(k).begin());
  }
  return b;
}

struct StepRecord {
  LossTerms<double> parts{};
  double total = 0.0;
  double beta = 0.0;
  std::size_t n_pairs = 0, n_pos = 0, n_neg = 0;
};

inline double learning_rate(const RunConfig& cfg, long step, long total_steps) {
  if (!cfg.train.cosine || total_steps <= 0) return cfg.train.lr;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return cfg.train.min_lr + 0.5 * (cfg.train.lr - cfg.train.min_lr) * (1.0 + std::cos(std::numbers::pi * t));
}

/// One SGD-with-momentum step on the full objective. `bank` is null while
/// SSR is disabled or warming up, which zeroes its weight.
inline StepRecord train_step(RunState& state, const BatchViews& batch, Model& model, const PrototypeBank* bank,
                             const RunConfig& cfg, double lr) {
  const auto& w = cfg.loss;
  const std::size_t B = batch.size();
  const std::size_t n_lab = batch.labeled_idx.size();
  const std::size_t S = batch.pairs.size();
  const bool as_printed = w.kl_as_printed && S > 0;

  Tape tape;
  std::vector<Var> inputs{tape.constant(Tensor(batch.weak1.shape(), batch.weak1.storage())),
                          tape.constant(Tensor(batch.weak2.shape(), batch.weak2.storage()))};
  if (S > 0) inputs.push_back(tape.constant(Tensor(batch.strong.shape(), batch.strong.storage())));
  if (as_printed) inputs.push_back(tape.constant(Tensor(batch.clean_source.shape(), batch.clean_source.storage())));
  Var H = model.forward_features(tape, tape.concat_rows(inputs));

  auto range = [](std::size_t from, std::size_t n) {
    std::vector<std::size_t> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = from + i;
    return r;
  };
  Var h1 = tape.gather_rows(H, range(0, B));
  Var h2 = tape.gather_rows(H, range(B, B));

  LossTerms<Var> t{};
  Var z1 = model.project(tape, h1);
  Var z2 = model.project(tape, h2);
  t.rep_u = l_rep_u(tape, z1, z2, w.tau_u, w.include_positive_in_denominator);
  if (n_lab >= 2) {
    const auto lab = batch.labeled_rows();
    t.rep_s = l_rep_s(tape, tape.gather_rows(z1, lab), tape.gather_rows(z2, lab), batch.labels, w.tau_c,
                      w.include_positive_in_denominator);
  } else {
    t.rep_s = tape.constant(Tensor::scalar(0.0));
  }

  Var logits1 = model.cosine_logits(tape, h1);
  Var logits2 = model.cosine_logits(tape, h2);
  Var p1 = tape.softmax_rows(logits1, w.tau_s);
  Var p2 = tape.softmax_rows(logits2, w.tau_s);
  Var q = pseudo_labels(tape, logits2, w.tau_t);
  const ClsTerms cls = l_cls(tape, p1, p2, q, batch.labeled_rows(), batch.labels, w.lambda, w.epsilon);
  t.cls_u = cls.unsup;
  t.cls_s = cls.sup;
  t.entropy = cls.entropy;

  if (S > 0) {
    std::vector<std::size_t> sources;
    for (const auto& pr : batch.pairs) sources.push_back(pr.source);
    Var p_weak = tape.gather_rows(p1, sources);
    Var p_strong = model.classify(tape, tape.gather_rows(H, range(2 * B, S)), w.tau_s);
    if (as_printed) {
      Var p_clean = model.classify(tape, tape.gather_rows(H, range(2 * B + S, S)), w.tau_s);
      t.kl = l_kl_as_printed(tape, p_clean, p_weak, p_strong);
    } else {
      t.kl = l_kl_sva(tape, p_weak, p_strong);
    }
  } else {
    t.kl = tape.constant(Tensor::scalar(0.0));
  }

  StepRecord rec;
  rec.n_pairs = S;
  if (bank && cfg.ssr.enabled) {
    const auto unl = range(n_lab, B - n_lab);
    const Tensor& probs = p1.value();
    std::vector<int> predicted;
    std::vector<double> confidence;
    for (std::size_t r : unl) {
      auto row = probs.row(r);
      std::size_t best = 0;
      for (std::size_t k = 1; k < row.size(); ++k)
        if (row[k] > row[best]) best = k;
      predicted.push_back(static_cast<int>(best));
      confidence.push_back(row[best]);
    }
    const SsrTerms ssr = l_ssr(tape, tape.gather_rows(h1, unl), predicted, *bank, cfg.ssr.tau_ssr,
                               cfg.ssr.threshold_routing ? &confidence : nullptr, cfg.ssr.routing_threshold);
    t.ssr_pos = ssr.pos;
    t.ssr_neg = ssr.neg;
    rec.n_pos = ssr.n_pos;
    rec.n_neg = ssr.n_neg;
    rec.beta = w.beta;
  } else {
    t.ssr_pos = tape.constant(Tensor::scalar(0.0));
    t.ssr_neg = tape.constant(Tensor::scalar(0.0));
    rec.beta = 0.0;
  }

  Var total = total_loss(t, w, rec.beta);
  rec.parts = {t.rep_u.value().item(),   t.rep_s.value().item(), t.cls_u.value().item(),
               t.cls_s.value().item(),   t.entropy.value().item(), t.kl.value().item(),
               t.ssr_pos.value().item(), t.ssr_neg.value().item()};
  check_finite(rec.parts);
  rec.total = total.value().item();
  if (!std::isfinite(rec.total)) throw std::runtime_error("non-finite total loss");

  model.zero_grad();
  tape.backward(total);
  auto params = model.params().all();
  if (state.velocity.size() != params.size()) {
    state.velocity.clear();
    for (Tensor* p : params) state.velocity.emplace_back(p->numel(), 0.0);
  }
  const double m = cfg.train.momentum;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    if (!p.grad()) continue;
    const auto& g = *p.grad();
    auto& v = state.velocity[k];
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = m * v[i] - lr * g[i];
      p[i] += v[i];
    }
  }
  ++state.step;
  return rec;
}

struct ProbeResult {
  double acc_all = 0.0, acc_old = 0.0, acc_new = 0.0, shortcut_gap = 0.0;
};

using ProbeFn = std::function<ProbeResult(const Model&)>;
using StepObserver = std::function<void(const StepRecord&)>;

struct TrainResult {
  Model model;
  Model initial;
  std::vector<nlohmann::json> metrics;
};

inline ModelDims model_dims(const RunConfig& cfg, std::size_t input, int K) {
  return {input, cfg.model.hidden, cfg.model.feature, cfg.model.projection, static_cast<std::size_t>(K)};
}

/// Runs cfg.train.epochs epochs and logs one metrics record per epoch plus
/// an epoch-0 record at initialization. `on_step` sees every step record.
inline TrainResult train_run(const RunConfig& cfg, const TrainView& view, const ProbeFn& probe = nullptr,
                             const StepObserver& on_step = nullptr) {
  cfg.loss.validate();
  cfg.ssr.validate();
  cfg.sva.mask.validate();
  if (view.labeled_images.empty()) throw std::invalid_argument("training split has no labeled samples");
  const std::size_t input = view.labeled_images.front()->numel();

  RunState state = make_run_state(cfg.train.seed);
  TrainResult res;
  res.model = Model::init(state.rng.init(), model_dims(cfg, input, view.K));
  res.initial = res.model;
  Model& model = res.model;

  const long per_epoch = static_cast<long>(steps_per_epoch(view, cfg));
  const long total_steps = per_epoch * cfg.train.epochs;
  PrototypeBank bank(view.known_classes, cfg.model.feature, per_epoch * cfg.ssr.refresh_every_epochs);
  std::vector<const Tensor*> lab_imgs = view.labeled_images;

  auto record = [&](int epoch, const LossTerms<double>& p, double total, double ms) {
    nlohmann::json j;
    j["epoch"] = epoch;
    j["step"] = state.step;
    j["l_rep_u"] = p.rep_u;
    j["l_rep_s"] = p.rep_s;
    j["l_cls_u"] = p.cls_u;
    j["l_cls_s"] = p.cls_s;
    j["h_mean_entropy"] = p.entropy;
    j["l_kl"] = p.kl;
    j["l_ssr_pos"] = p.ssr_pos;
    j["l_ssr_neg"] = p.ssr_neg;
    j["total"] = total;
    ProbeResult pr;
    if (probe) pr = probe(model);
    j["probe_all"] = pr.acc_all;
    j["probe_old"] = pr.acc_old;
    j["probe_new"] = pr.acc_new;
    j["shortcut_gap"] = pr.shortcut_gap;
    j["wall_ms"] = cfg.train.record_wall_time ? ms : 0.0;
    res.metrics.push_back(std::move(j));
  };

  record(0, LossTerms<double>{}, 0.0, 0.0);
  const PseudoLabeler pseudo = model_pseudo_labeler(model, cfg.loss.tau_s);
  for (int e = 0; e < cfg.train.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    state.epoch = e + 1;
    begin_epoch(state, view);
    const bool ssr_active = cfg.ssr.enabled && e >= cfg.ssr.warmup_epochs;
    if (ssr_active && (e - cfg.ssr.warmup_epochs) % cfg.ssr.refresh_every_epochs == 0) {
      std::optional<double> ema;
      if (cfg.ssr.ema) ema = cfg.ssr.ema_momentum;
      bank.refresh(model, lab_imgs, view.labels, state.step, ema);
    }
    LossTerms<double> sum{};
    double total = 0.0;
    for (long s = 0; s < per_epoch; ++s) {
      const BatchViews batch = compose_batch(view, cfg, state, pseudo);
      const StepRecord r = train_step(state, batch, model, ssr_active ? &bank : nullptr, cfg,
                                      learning_rate(cfg, state.step, total_steps));
      if (on_step) on_step(r);
      sum.rep_u += r.parts.rep_u;
      sum.rep_s += r.parts.rep_s;
      sum.cls_u += r.parts.cls_u;
      sum.cls_s += r.parts.cls_s;
      sum.entropy += r.parts.entropy;
      sum.kl += r.parts.kl;
      sum.ssr_pos += r.parts.ssr_pos;
      sum.ssr_neg += r.parts.ssr_neg;
      total += r.total;
    }
    const double n = static_cast<double>(per_epoch);
    LossTerms<double> mean{sum.rep_u / n, sum.rep_s / n, sum.cls_u / n,  sum.cls_s / n,
                           sum.entropy / n, sum.kl / n,  sum.ssr_pos / n, sum.ssr_neg / n};
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    record(e + 1, mean, total / n, ms);
  }
  return res;
}

inline void write_metrics(const std::filesystem::path& path, const std::vector<nlohmann::json>& metrics) {
  std::string text;
  for (const auto& j : metrics) text += j.dump() + "\n";
  write_text(path, text);
}

}  // namespace cleargcd
