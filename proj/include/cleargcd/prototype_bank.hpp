#pragma once

// Known-class feature-mean bank and the shortcut-suppression losses.

#include <algorithm>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleargcd/model.hpp"
#include "cleargcd/tensor.hpp"

namespace cleargcd {

struct BankSettings {
  bool enabled = true;
  double tau_ssr = 0.1;
  int refresh_every_epochs = 1;
  int warmup_epochs = 2;
  bool ema = false;
  double ema_momentum = 0.9;
  bool threshold_routing = false;
  double routing_threshold = 0.5;

  void validate() const {
    if (!(tau_ssr > 0.0)) throw std::invalid_argument("tau_ssr must be positive");
    if (refresh_every_epochs < 1) throw std::invalid_argument("refresh_every_epochs must be >= 1");
    if (warmup_epochs < 0) throw std::invalid_argument("warmup_epochs must be >= 0");
    if (!(ema_momentum >= 0.0 && ema_momentum < 1.0)) throw std::invalid_argument("ema_momentum must lie in [0,1)");
    if (!(routing_threshold >= 0.0 && routing_threshold <= 1.0))
      throw std::invalid_argument("routing_threshold must lie in [0,1]");
  }
};

class PrototypeBank {
 public:
  PrototypeBank() = default;
  PrototypeBank(std::vector<int> known_classes, std::size_t feature_dim, long refresh_period_steps)
      : known_(std::move(known_classes)),
        prototypes_({known_.size(), feature_dim}),
        refresh_period_(refresh_period_steps) {
    std::sort(known_.begin(), known_.end());
    for (std::size_t r = 0; r < known_.size(); ++r) row_[known_[r]] = r;
  }

  const std::vector<int>& known_classes() const { return known_; }
  const Tensor& prototypes() const { return prototypes_; }
  long last_refresh_step() const { return last_refresh_; }
  bool built() const { return last_refresh_ >= 0; }
  bool fresh(long step) const { return built() && step - last_refresh_ <= refresh_period_; }

  std::optional<std::size_t> row_of(int cls) const {
    auto it = row_.find(cls);
    if (it == row_.end()) return std::nullopt;
    return it->second;
  }

  /// p_c = mean of feature rows whose label is c. With `ema_momentum` set the
  /// new mean is blended into the previous bank instead of replacing it.
  void refresh_from_features(const Tensor& features, const std::vector<int>& labels, long step,
                             std::optional<double> ema_momentum = std::nullopt) {
    if (features.rows() != labels.size()) throw ShapeError("bank refresh: features and labels differ in length");
    if (features.cols() != prototypes_.cols())
      throw ShapeError("bank refresh: feature dim " + std::to_string(features.cols()) + " vs bank " +
                       std::to_string(prototypes_.cols()));
    Tensor sums({known_.size(), prototypes_.cols()});
    std::vector<std::size_t> counts(known_.size(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto r = row_of(labels[i]);
      if (!r) continue;
      ++counts[*r];
      auto dst = sums.row(*r);
      auto src = features.row(i);
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
    for (std::size_t r = 0; r < known_.size(); ++r) {
      if (counts[r] == 0) throw std::invalid_argument("known class " + std::to_string(known_[r]) + " has no labeled samples");
      for (std::size_t k = 0; k < prototypes_.cols(); ++k) {
        const double mean = sums(r, k) / static_cast<double>(counts[r]);
        prototypes_(r, k) = (ema_momentum && built()) ? *ema_momentum * prototypes_(r, k) + (1.0 - *ema_momentum) * mean : mean;
      }
    }
    last_refresh_ = step;
  }

  void refresh(const Model& model, const std::vector<const Tensor*>& labeled_images, const std::vector<int>& labels,
               long step, std::optional<double> ema_momentum = std::nullopt) {
    refresh_from_features(model.features(labeled_images), labels, step, ema_momentum);
  }

 private:
  std::vector<int> known_;
  std::map<int, std::size_t> row_;
  Tensor prototypes_;
  long refresh_period_ = 0;
  long last_refresh_ = -1;
};

/// Cosine similarity of feature rows against bank rows, n x |Y_l|. Bank
/// rows enter as constants.
inline Var bank_similarity(Tape& tape, Var features, const PrototypeBank& bank) {
  Var fn = tape.l2_normalize_rows(features);
  Var pn = tape.l2_normalize_rows(tape.constant(bank.prototypes()));
  return tape.matmul(fn, tape.transpose(pn));
}

/// Mean over rows of -log softmax_k(sim_k / tau)[c_i]; `classes[i]` must be known.
inline Var l_pa_pos(Tape& tape, Var features, const std::vector<int>& classes, const PrototypeBank& bank, double tau_ssr) {
  if (!(tau_ssr > 0.0)) throw DomainError("tau_ssr must be positive");
  if (classes.size() != features.rows()) throw ShapeError("l_pa_pos: one class per feature row required");
  if (classes.empty()) return tape.constant(Tensor::scalar(0.0));
  Tensor pick({classes.size(), bank.known_classes().size()});
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto r = bank.row_of(classes[i]);
    if (!r) throw std::invalid_argument("class " + std::to_string(classes[i]) + " is not in the prototype bank");
    pick(i, *r) = 1.0;
  }
  Var logp = tape.log_softmax_rows(bank_similarity(tape, features, bank), tau_ssr);
  return tape.scale(tape.sum(tape.mul(tape.constant(std::move(pick)), logp)),
                    -1.0 / static_cast<double>(classes.size()));
}

/// Mean over rows of -(1/|Y_l|) sum_c log(1 - sigmoid(sim_c)).
inline Var l_pa_neg(Tape& tape, Var features, const PrototypeBank& bank) {
  if (features.rows() == 0) return tape.constant(Tensor::scalar(0.0));
  Var sim = bank_similarity(tape, features, bank);
  // 1 - sigmoid(s) == sigmoid(-s)
  return tape.neg(tape.mean(tape.log(tape.sigmoid(tape.neg(sim)))));
}

struct SsrTerms {
  Var pos;
  Var neg;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Routes each unlabeled row by its predicted class: known -> positive
/// alignment toward that prototype, otherwise negative alignment. When
/// `confidence` is given, rows at or below `threshold` are not routed.
inline SsrTerms l_ssr(Tape& tape, Var unlabeled_features, const std::vector<int>& predicted, const PrototypeBank& bank,
                      double tau_ssr, const std::vector<double>* confidence = nullptr, double threshold = 0.0) {
  if (predicted.size() != unlabeled_features.rows()) throw ShapeError("l_ssr: one prediction per feature row required");
  std::vector<std::size_t> pos_rows, neg_rows;
  std::vector<int> pos_classes;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (confidence && (*confidence)[i] <= threshold) continue;
    if (bank.row_of(predicted[i])) {
      pos_rows.push_back(i);
      pos_classes.push_back(predicted[i]);
    } else {
      neg_rows.push_back(i);
    }
  }
  SsrTerms t;
  t.n_pos = pos_rows.size();
  t.n_neg = neg_rows.size();
  t.pos = pos_rows.empty() ? tape.constant(Tensor::scalar(0.0))
                           : l_pa_pos(tape, tape.gather_rows(unlabeled_features, pos_rows), pos_classes, bank, tau_ssr);
  t.neg = neg_rows.empty() ? tape.constant(Tensor::scalar(0.0))
                           : l_pa_neg(tape, tape.gather_rows(unlabeled_features, neg_rows), bank);
  return t;
}

}  // namespace cleargcd
