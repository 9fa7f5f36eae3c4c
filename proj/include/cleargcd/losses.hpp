#pragma once

// Representation, classification, SVA consistency and total objectives.
// Every function records onto the caller's tape and returns a 1x1 Var.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleargcd/tensor.hpp"

namespace cleargcd {

struct LossWeights {
  double lambda = 0.35;   // supervised share of L_rep and L_cls
  double epsilon = 1.0;   // mean-entropy weight
  double alpha = 1.0;
  double beta = 0.5;
  double tau_u = 0.07;    // unsupervised contrastive
  double tau_c = 0.07;    // supervised contrastive
  double tau_s = 0.1;     // student classifier
  double tau_t = 0.05;    // teacher / pseudo-label sharpening
  bool include_positive_in_denominator = false;
  bool kl_as_printed = false;

  void validate() const {
    for (auto [name, t] : {std::pair{"tau_u", tau_u}, {"tau_c", tau_c}, {"tau_s", tau_s}, {"tau_t", tau_t}})
      if (!(t > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0,1]");
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
    if (!(beta >= 0.0)) throw std::invalid_argument("beta must be non-negative");
  }
};

namespace detail {

inline Tensor off_diagonal_ones(std::size_t n) {
  Tensor m({n, n}, 1.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 0.0;
  return m;
}

inline Var scaled_similarity(Tape& tape, Var z, Var zp, double tau) {
  if (z.rows() != zp.rows() || z.cols() != zp.cols())
    throw ShapeError("contrastive view shape mismatch: " + shape_str(z.shape()) + " vs " + shape_str(zp.shape()));
  if (!(tau > 0.0)) throw DomainError("contrastive temperature must be positive");
  return tape.scale(tape.matmul(z, tape.transpose(zp)), 1.0 / tau);
}

}  // namespace detail

/// Unsupervised InfoNCE between paired views. The positive z_i . z'_i is
/// excluded from the denominator unless `include_positive` is set.
inline Var l_rep_u(Tape& tape, Var z, Var zp, double tau_u, bool include_positive = false) {
  const std::size_t b = z.rows();
  if (b < 2) throw std::invalid_argument("l_rep_u needs a batch of at least 2, got " + std::to_string(b));
  Var s = detail::scaled_similarity(tape, z, zp, tau_u);
  Var e = tape.exp(s);
  Var denom = include_positive ? tape.sum_rows(e)
                               : tape.sum_rows(tape.mul(e, tape.constant(detail::off_diagonal_ones(b))));
  Var pos = tape.sum_rows(tape.mul(s, tape.constant(Tensor::identity(b))));
  return tape.mean(tape.sub(tape.log(denom), pos));
}

/// Supervised contrastive loss over a labeled batch. Positives of i are the
/// other same-class samples; a class seen once falls back to i's own second
/// view. Each scored positive q is excluded from its denominator.
inline Var l_rep_s(Tape& tape, Var z, Var zp, const std::vector<int>& labels, double tau_c,
                   bool include_positive = false) {
  const std::size_t m = z.rows();
  if (labels.size() != m)
    throw ShapeError("l_rep_s: " + std::to_string(labels.size()) + " labels for " + std::to_string(m) + " rows");
  if (m < 2) throw std::invalid_argument("l_rep_s needs at least 2 labeled samples, got " + std::to_string(m));

  Tensor weights({m, m});
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<std::size_t> pos;
    for (std::size_t q = 0; q < m; ++q)
      if (q != i && labels[q] == labels[i]) pos.push_back(q);
    if (pos.empty()) pos.push_back(i);
    for (std::size_t q : pos) weights(i, q) = 1.0 / (static_cast<double>(m) * static_cast<double>(pos.size()));
  }

  Var s = detail::scaled_similarity(tape, z, zp, tau_c);
  Var e = tape.exp(s);
  // (e M)_iq sums e_in over n != q; summing positives avoids cancellation.
  Var denom = tape.matmul(e, tape.constant(include_positive ? Tensor({m, m}, 1.0) : detail::off_diagonal_ones(m)));
  return tape.sum(tape.mul(tape.constant(std::move(weights)), tape.sub(tape.log(denom), s)));
}

/// Sharpened, gradient-stopped targets from the other view's cosine logits.
inline Var pseudo_labels(Tape& tape, Var other_view_cosine_logits, double tau_t) {
  return tape.stop_gradient(tape.softmax_rows(other_view_cosine_logits, tau_t));
}

/// Mean over rows of -sum_k t_k log p_k.
inline Var cross_entropy(Tape& tape, Var targets, Var p) {
  if (targets.rows() != p.rows() || targets.cols() != p.cols())
    throw ShapeError("cross_entropy shape mismatch: " + shape_str(targets.shape()) + " vs " + shape_str(p.shape()));
  return tape.scale(tape.sum(tape.mul(targets, tape.log(p))), -1.0 / static_cast<double>(p.rows()));
}

/// Entropy -sum_k pbar_k log pbar_k of the mean prediction over both views.
inline Var mean_entropy(Tape& tape, Var p, Var pp) {
  const std::size_t b = p.rows();
  Var pbar = tape.matmul(tape.constant(Tensor({1, b}, 1.0 / (2.0 * static_cast<double>(b)))), tape.add(p, pp));
  return tape.neg(tape.sum(tape.mul(pbar, tape.log(pbar))));
}

struct ClsTerms {
  Var unsup;    // L_cls^u
  Var sup;      // L_cls^s
  Var entropy;  // H_ent(pbar)
  Var total;    // (1-lambda)(L_cls^u - eps H_ent) + lambda L_cls^s
};

/// Classification objective. `labeled_rows` index rows of p with labels
/// `labels`; an empty labeled set contributes zero supervised loss.
inline ClsTerms l_cls(Tape& tape, Var p, Var pp, Var q, const std::vector<std::size_t>& labeled_rows,
                      const std::vector<int>& labels, double lambda, double epsilon) {
  if (labeled_rows.size() != labels.size()) throw ShapeError("l_cls: labeled rows and labels differ in length");
  ClsTerms t;
  t.unsup = cross_entropy(tape, q, p);
  if (labeled_rows.empty()) {
    t.sup = tape.constant(Tensor::scalar(0.0));
  } else {
    Tensor onehot({labels.size(), p.cols()});
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= p.cols())
        throw std::out_of_range("label " + std::to_string(labels[i]) + " outside classifier range");
      onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    t.sup = cross_entropy(tape, tape.constant(std::move(onehot)), tape.gather_rows(p, labeled_rows));
  }
  t.entropy = mean_entropy(tape, p, pp);
  Var unsup_part = tape.sub(t.unsup, tape.scale(t.entropy, epsilon));
  t.total = tape.add(tape.scale(unsup_part, 1.0 - lambda), tape.scale(t.sup, lambda));
  return t;
}

/// Mean KL(sg(p_weak) || p_strong) over SVA pairs; zero when no pairs.
inline Var l_kl_sva(Tape& tape, Var p_weak, Var p_strong) {
  if (p_strong.rows() == 0) return tape.constant(Tensor::scalar(0.0));
  if (p_weak.rows() != p_strong.rows() || p_weak.cols() != p_strong.cols())
    throw ShapeError("l_kl_sva shape mismatch: " + shape_str(p_weak.shape()) + " vs " + shape_str(p_strong.shape()));
  Var anchor = tape.stop_gradient(p_weak);
  const Tensor& a = anchor.value();
  // 0 log 0 = 0: clamp the anchor log argument; its entries carry no gradient.
  Tensor log_anchor(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) log_anchor[i] = a[i] > 0.0 ? std::log(a[i]) : 0.0;
  Var diff = tape.sub(tape.constant(std::move(log_anchor)), tape.log(p_strong));
  return tape.scale(tape.sum(tape.mul(anchor, diff)), 1.0 / static_cast<double>(p_strong.rows()));
}

/// Literal three-distribution integrand: mean of sum_k p(x)_k log(p(x')_k / p(x~)_k),
/// with p(x) and p(x') gradient-stopped.
inline Var l_kl_as_printed(Tape& tape, Var p_clean, Var p_weak, Var p_strong) {
  if (p_strong.rows() == 0) return tape.constant(Tensor::scalar(0.0));
  Var w = tape.stop_gradient(p_clean);
  Var diff = tape.sub(tape.stop_gradient(tape.log(p_weak)), tape.log(p_strong));
  return tape.scale(tape.sum(tape.mul(w, diff)), 1.0 / static_cast<double>(p_strong.rows()));
}

/// Per-part loss values, either taped (Var) or recorded (double).
template <class T>
struct LossTerms {
  T rep_u, rep_s, cls_u, cls_s, entropy, kl, ssr_pos, ssr_neg;
};

/// alpha (L_rep + L_cls + L_KL) + beta L_SSR with
/// L_rep = (1-lambda) L_rep^u + lambda L_rep^s,
/// L_cls = (1-lambda)(L_cls^u - eps H) + lambda L_cls^s.
template <class T>
T total_loss(const LossTerms<T>& t, const LossWeights& w, double beta) {
  const double l = w.lambda;
  T rep = (1.0 - l) * t.rep_u + l * t.rep_s;
  T cls = (1.0 - l) * (t.cls_u - w.epsilon * t.entropy) + l * t.cls_s;
  return w.alpha * (rep + cls + t.kl) + beta * (t.ssr_pos + t.ssr_neg);
}

inline void check_finite(const LossTerms<double>& t) {
  const std::pair<const char*, double> parts[] = {{"l_rep_u", t.rep_u}, {"l_rep_s", t.rep_s},
                                                  {"l_cls_u", t.cls_u}, {"l_cls_s", t.cls_s},
                                                  {"h_mean_entropy", t.entropy}, {"l_kl", t.kl},
                                                  {"l_ssr_pos", t.ssr_pos}, {"l_ssr_neg", t.ssr_neg}};
  for (const auto& [name, v] : parts)
    if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite loss part ") + name);
}

inline double total_loss_checked(const LossTerms<double>& t, const LossWeights& w, double beta) {
  check_finite(t);
  return total_loss(t, w, beta);
}

}  // namespace cleargcd
