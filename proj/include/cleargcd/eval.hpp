#pragma once

// Hungarian-matched clustering accuracy (All / Old / New) and the
// background-swap shortcut gap.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleargcd/datagen.hpp"
#include "cleargcd/model.hpp"
#include "json.hpp"

namespace cleargcd {

/// counts(i, j) = samples with predicted cluster i and true class j.
struct CostMatrix {
  std::size_t K = 0;
  std::vector<std::int64_t> counts;

  std::int64_t& at(std::size_t i, std::size_t j) { return counts[i * K + j]; }
  std::int64_t at(std::size_t i, std::size_t j) const { return counts[i * K + j]; }
  std::int64_t total() const {
    std::int64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }

  static CostMatrix build(const std::vector<int>& preds, const std::vector<int>& truths, std::size_t K) {
    if (preds.size() != truths.size())
      throw std::invalid_argument("prediction/truth length mismatch: " + std::to_string(preds.size()) + " vs " +
                                  std::to_string(truths.size()));
    CostMatrix m{K, std::vector<std::int64_t>(K * K, 0)};
    for (std::size_t n = 0; n < preds.size(); ++n) {
      if (preds[n] < 0 || truths[n] < 0 || static_cast<std::size_t>(preds[n]) >= K ||
          static_cast<std::size_t>(truths[n]) >= K)
        throw std::out_of_range("class id outside [0, K) at sample " + std::to_string(n));
      ++m.at(static_cast<std::size_t>(preds[n]), static_cast<std::size_t>(truths[n]));
    }
    return m;
  }
};

/// Maximum-weight perfect matching on a square count matrix via the
/// shortest-augmenting-path Hungarian method, O(K^3). Returns
/// assignment[pred] = true class.
inline std::vector<int> hungarian_max(const CostMatrix& m) {
  const std::size_t n = m.K;
  if (n == 0) return {};
  std::int64_t mx = 0;
  for (auto c : m.counts) mx = std::max(mx, c);
  const auto cost = [&](std::size_t i, std::size_t j) { return mx - m.at(i, j); };

  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  // 1-based potentials; p[j] = row matched to column j.
  std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<std::int64_t> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      std::int64_t delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const std::int64_t cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> assignment(n, -1);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = static_cast<int>(j - 1);
  return assignment;
}

struct EvalReport {
  double acc_all = 0.0, acc_old = 0.0, acc_new = 0.0;
  std::size_t n_all = 0, n_old = 0, n_new = 0;
  std::size_t matched_all = 0, matched_old = 0, matched_new = 0;
  std::vector<int> assignment;  // predicted cluster -> true class
  double shortcut_gap = 0.0;

  nlohmann::json to_json() const {
    return {{"acc_all", acc_all},         {"acc_old", acc_old},         {"acc_new", acc_new},
            {"n_all", n_all},             {"n_old", n_old},             {"n_new", n_new},
            {"matched_all", matched_all}, {"matched_old", matched_old}, {"matched_new", matched_new},
            {"assignment", assignment},   {"shortcut_gap", shortcut_gap}};
  }
};

/// One global assignment over all samples; Old/New are the subsets whose
/// true class is / is not in `known_classes`.
inline EvalReport hungarian_accuracy(const std::vector<int>& preds, const std::vector<int>& truths,
                                     const std::vector<int>& known_classes, std::size_t K) {
  const CostMatrix m = CostMatrix::build(preds, truths, K);
  EvalReport r;
  r.assignment = hungarian_max(m);
  std::vector<bool> known(K, false);
  for (int c : known_classes)
    if (c >= 0 && static_cast<std::size_t>(c) < K) known[static_cast<std::size_t>(c)] = true;
  for (std::size_t n = 0; n < preds.size(); ++n) {
    const bool hit = r.assignment[static_cast<std::size_t>(preds[n])] == truths[n];
    const bool old = known[static_cast<std::size_t>(truths[n])];
    ++r.n_all;
    r.matched_all += hit;
    if (old) {
      ++r.n_old;
      r.matched_old += hit;
    } else {
      ++r.n_new;
      r.matched_new += hit;
    }
  }
  const auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  r.acc_all = ratio(r.matched_all, r.n_all);
  r.acc_old = ratio(r.matched_old, r.n_old);
  r.acc_new = ratio(r.matched_new, r.n_new);
  return r;
}

/// Row argmax, ties to the lowest index.
inline std::vector<int> argmax_rows(const Tensor& p) {
  std::vector<int> out(p.rows(), 0);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    auto row = p.row(r);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k)
      if (row[k] > row[best]) best = k;
    out[r] = static_cast<int>(best);
  }
  return out;
}

inline constexpr std::size_t kEvalChunk = 512;

/// Probabilities for many samples, in chunks.
inline Tensor predict_probabilities(const Model& model, const std::vector<Sample>& samples, double tau_s) {
  const std::size_t K = model.dims().num_classes;
  Tensor out({samples.size(), K});
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    const std::size_t end = std::min(samples.size(), start + kEvalChunk);
    std::vector<const Tensor*> imgs;
    for (std::size_t i = start; i < end; ++i) imgs.push_back(&samples[i].image);
    const Tensor p = model.probabilities(imgs, tau_s);
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(start * K));
  }
  return out;
}

inline std::vector<int> predict_clusters(const Model& model, const std::vector<Sample>& samples, double tau_s) {
  return argmax_rows(predict_probabilities(model, samples, tau_s));
}

inline std::vector<int> labels_of(const std::vector<Sample>& samples) {
  std::vector<int> y;
  y.reserve(samples.size());
  for (const Sample& s : samples) y.push_back(s.label);
  return y;
}

/// acc_all(clean) - acc_all(swapped), each with its own optimal assignment.
inline double shortcut_gap(const std::vector<int>& clean_preds, const std::vector<int>& clean_truths,
                           const std::vector<int>& swapped_preds, const std::vector<int>& swapped_truths,
                           const std::vector<int>& known_classes, std::size_t K) {
  if (clean_preds.size() != swapped_preds.size())
    throw std::invalid_argument("clean and swapped sets differ in size: " + std::to_string(clean_preds.size()) +
                                " vs " + std::to_string(swapped_preds.size()));
  return hungarian_accuracy(clean_preds, clean_truths, known_classes, K).acc_all -
         hungarian_accuracy(swapped_preds, swapped_truths, known_classes, K).acc_all;
}

inline double shortcut_reliance(const Model& model, const std::vector<Sample>& clean, const std::vector<Sample>& swapped,
                                double tau_s, const std::vector<int>& known_classes) {
  const std::size_t K = model.dims().num_classes;
  return shortcut_gap(predict_clusters(model, clean, tau_s), labels_of(clean), predict_clusters(model, swapped, tau_s),
                      labels_of(swapped), known_classes, K);
}

/// Full report on D_u with the shortcut gap against a swapped copy.
inline EvalReport evaluate(const Model& model, const std::vector<Sample>& clean, const std::vector<Sample>& swapped,
                           double tau_s, const std::vector<int>& known_classes) {
  const std::size_t K = model.dims().num_classes;
  const auto preds = predict_clusters(model, clean, tau_s);
  EvalReport r = hungarian_accuracy(preds, labels_of(clean), known_classes, K);
  const auto swapped_preds = predict_clusters(model, swapped, tau_s);
  r.shortcut_gap = shortcut_gap(preds, labels_of(clean), swapped_preds, labels_of(swapped), known_classes, K);
  return r;
}

}  // namespace cleargcd
