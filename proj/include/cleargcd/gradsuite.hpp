#pragma once

// Finite-difference checks of every loss on random small instances.

#include <cstdint>
#include <functional>
#include <limits>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cleargcd/gradcheck.hpp"
#include "cleargcd/losses.hpp"
#include "cleargcd/model.hpp"
#include "cleargcd/prototype_bank.hpp"

namespace cleargcd {

struct GradSuiteEntry {
  std::string name;
  std::size_t instances = 0;
  std::size_t failed_instances = 0;
  double max_rel_error = 0.0;
  bool passed() const { return instances > 0 && failed_instances == 0; }
};

struct GradSuiteOptions {
  std::size_t instances = 50;
  std::uint64_t seed = 7;
  double step = 2e-3;
  Stencil stencil = Stencil::kFivePoint;
  double tolerance = 1e-4;
  bool fault_inject = false;  // identity op with a deliberately wrong backward on every input
};

namespace detail {

inline Tensor random_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t({rows, cols});
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Rows with a random direction and a norm in [0.5, 2]: every loss here
// normalizes its rows, and normalization is singular at the origin.
inline Tensor random_rows(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> len(0.5, 2.0);
  Tensor t({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = t.row(r);
    double n2 = 0.0;
    for (double& v : row) {
      v = g(rng);
      n2 += v * v;
    }
    const double scale = len(rng) / std::sqrt(std::max(n2, 1e-24));
    for (double& v : row) v *= scale;
  }
  return t;
}

inline Var faulty_identity(Tape& tape, Var x) {
  return tape.custom(
      x, [](const Tensor& t) { return Tensor(t.shape(), t.storage()); },
      [](const Tensor&, const Tensor&, const std::vector<double>& g) {
        std::vector<double> out(g);
        for (double& v : out) v *= 1.5;
        return out;
      });
}

inline std::vector<std::size_t> iota_rows(std::size_t from, std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = from + i;
  return r;
}

// One random instance: the input to differentiate plus a closure over the
// instance's fixed data.
struct Instance {
  Tensor input;
  ScalarFn fn;
};

using InstanceFactory = std::function<Instance(std::mt19937_64&)>;

inline std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int classes) {
  std::uniform_int_distribution<int> u(0, classes - 1);
  std::vector<int> y(n);
  for (int& v : y) v = u(rng);
  return y;
}

inline PrototypeBank random_bank(std::mt19937_64& rng, std::size_t known, std::size_t d) {
  std::vector<int> classes(known);
  for (std::size_t c = 0; c < known; ++c) classes[c] = static_cast<int>(c);
  PrototypeBank bank(classes, d, 1);
  Tensor feats = random_rows(rng, known, d);
  bank.refresh_from_features(feats, classes, 0);
  return bank;
}

inline double min_abs_preactivation(const Model& model, const Tensor& x) {
  const ModelParams& p = model.params();
  Tape t;
  Var a1 = t.add_row(t.matmul(t.constant(x), t.constant(p.w1)), t.constant(p.b1));
  Var a2 = t.add_row(t.matmul(t.relu(a1), t.constant(p.w2)), t.constant(p.b2));
  double m = std::numeric_limits<double>::infinity();
  for (Var a : {a1, a2})
    for (double v : a.value().data()) m = std::min(m, std::abs(v));
  return m;
}

inline std::vector<std::pair<std::string, InstanceFactory>> loss_factories() {
  using R = std::mt19937_64;
  std::vector<std::pair<std::string, InstanceFactory>> f;

  // Views enter as raw rows [z; z'] and are normalized inside.
  f.emplace_back("l_rep_u (unsupervised contrastive)", [](R& rng) {
    std::uniform_int_distribution<std::size_t> bn(2, 8), pn(2, 8);
    const std::size_t b = bn(rng), p = pn(rng);
    return Instance{random_rows(rng, 2 * b, p), [b](Tape& t, Var x) {
                      Var z = t.l2_normalize_rows(t.gather_rows(x, iota_rows(0, b)));
                      Var zp = t.l2_normalize_rows(t.gather_rows(x, iota_rows(b, b)));
                      return l_rep_u(t, z, zp, 0.07);
                    }};
  });
  f.emplace_back("l_rep_s (supervised contrastive)", [](R& rng) {
    std::uniform_int_distribution<std::size_t> bn(2, 8), pn(2, 8);
    const std::size_t b = bn(rng), p = pn(rng);
    auto y = random_labels(rng, b, 3);
    return Instance{random_rows(rng, 2 * b, p), [b, y](Tape& t, Var x) {
                      Var z = t.l2_normalize_rows(t.gather_rows(x, iota_rows(0, b)));
                      Var zp = t.l2_normalize_rows(t.gather_rows(x, iota_rows(b, b)));
                      return l_rep_s(t, z, zp, y, 0.07);
                    }};
  });
  // Rows [h; h'] of features and a prototype matrix appended below them.
  auto cls_instance = [](R& rng, std::size_t& b, std::size_t& k, std::size_t& d) {
    std::uniform_int_distribution<std::size_t> bn(2, 8), kn(2, 5), dn(2, 8);
    b = bn(rng);
    k = kn(rng);
    d = dn(rng);
    return random_rows(rng, 2 * b + k, d);
  };
  // Gradient-stopped targets are frozen at the base input: a finite
  // difference would otherwise see the teacher move with the student.
  struct ClsParts {
    Var p, pp, q;
  };
  auto cls_forward = [](Tape& t, Var x, std::size_t b, std::size_t k, const Tensor* frozen_q) {
    Var protos = t.l2_normalize_rows(t.gather_rows(x, iota_rows(2 * b, k)));
    auto logits = [&](Var h) { return t.matmul(t.l2_normalize_rows(h), t.transpose(protos)); };
    Var l1 = logits(t.gather_rows(x, iota_rows(0, b)));
    Var l2 = logits(t.gather_rows(x, iota_rows(b, b)));
    Var q = frozen_q ? t.constant(*frozen_q) : pseudo_labels(t, l2, 0.05);
    return ClsParts{t.softmax_rows(l1, 0.1), t.softmax_rows(l2, 0.1), q};
  };
  auto frozen_targets = [cls_forward](const Tensor& in, std::size_t b, std::size_t k) {
    Tape t;
    auto c = cls_forward(t, t.constant(in), b, k, nullptr);
    return std::make_pair(c.q.value(), c.p.value());
  };
  f.emplace_back("l_cls^u / l_cls^s (classification cross-entropy)", [=](R& rng) {
    std::size_t b, k, d;
    Tensor in = cls_instance(rng, b, k, d);
    auto y = random_labels(rng, b / 2 + 1, static_cast<int>(k));
    const Tensor q = frozen_targets(in, b, k).first;
    return Instance{std::move(in), [=](Tape& t, Var x) {
                      auto c = cls_forward(t, x, b, k, &q);
                      const ClsTerms terms = l_cls(t, c.p, c.pp, c.q, iota_rows(0, y.size()), y, 0.5, 0.0);
                      return t.add(terms.unsup, terms.sup);
                    }};
  });
  f.emplace_back("l_cls (with mean-entropy regularizer)", [=](R& rng) {
    std::size_t b, k, d;
    Tensor in = cls_instance(rng, b, k, d);
    auto y = random_labels(rng, b / 2 + 1, static_cast<int>(k));
    const Tensor q = frozen_targets(in, b, k).first;
    return Instance{std::move(in), [=](Tape& t, Var x) {
                      auto c = cls_forward(t, x, b, k, &q);
                      return l_cls(t, c.p, c.pp, c.q, iota_rows(0, y.size()), y, 0.35, 1.0).total;
                    }};
  });
  f.emplace_back("l_kl (SVA consistency)", [=](R& rng) {
    std::size_t b, k, d;
    Tensor in = cls_instance(rng, b, k, d);
    const Tensor anchor = frozen_targets(in, b, k).second;
    return Instance{std::move(in), [=](Tape& t, Var x) {
                      auto c = cls_forward(t, x, b, k, nullptr);
                      return l_kl_sva(t, t.constant(anchor), c.pp);
                    }};
  });
  f.emplace_back("l_pa_pos (positive alignment)", [](R& rng) {
    std::uniform_int_distribution<std::size_t> nn(1, 6), kn(1, 5), dn(2, 8);
    const std::size_t n = nn(rng), k = kn(rng), d = dn(rng);
    auto bank = random_bank(rng, k, d);
    auto cls = random_labels(rng, n, static_cast<int>(k));
    return Instance{random_rows(rng, n, d),
                    [bank, cls](Tape& t, Var x) { return l_pa_pos(t, x, cls, bank, 0.1); }};
  });
  f.emplace_back("l_pa_neg (negative alignment)", [](R& rng) {
    std::uniform_int_distribution<std::size_t> nn(1, 6), kn(1, 5), dn(2, 8);
    const std::size_t n = nn(rng), k = kn(rng), d = dn(rng);
    auto bank = random_bank(rng, k, d);
    return Instance{random_rows(rng, n, d), [bank](Tape& t, Var x) { return l_pa_neg(t, x, bank); }};
  });
  f.emplace_back("l_ssr (routed shortcut suppression)", [](R& rng) {
    std::uniform_int_distribution<std::size_t> nn(2, 8), kn(1, 4), dn(2, 8);
    const std::size_t n = nn(rng), k = kn(rng), d = dn(rng);
    auto bank = random_bank(rng, k, d);
    auto pred = random_labels(rng, n, static_cast<int>(2 * k));
    return Instance{random_rows(rng, n, d), [bank, pred](Tape& t, Var x) {
                      const SsrTerms s = l_ssr(t, x, pred, bank, 0.1);
                      return t.add(s.pos, s.neg);
                    }};
  });
  f.emplace_back("total objective through encoder, head and classifier", [](R& rng) {
    // Input is the batch of raw images; parameters stay fixed per instance.
    const std::size_t b = 4, k = 3;
    ModelDims dims{6, 5, 4, 3, k};
    auto model = std::make_shared<Model>(Model::init(rng(), dims));
    for (Tensor* p : model->params().all()) p->set_requires_grad(false);
    for (Tensor* bias : {&model->params().b1, &model->params().b2, &model->params().b3, &model->params().bp})
      *bias = random_tensor(rng, 1, bias->cols(), 0.2, 0.6);
    auto bank = std::make_shared<PrototypeBank>(random_bank(rng, 2, dims.feature));
    const std::vector<int> y{0, 1};
    const LossWeights w;
    struct Frozen {
      Tensor q, anchor;
    };
    auto objective = [=](Tape& t, Var x, const Frozen* fz, Frozen* capture) {
      Var h = model->forward_features(t, x);
      Var h1 = t.gather_rows(h, iota_rows(0, b));
      Var h2 = t.gather_rows(h, iota_rows(b, b));
      Var hs = t.gather_rows(h, iota_rows(2 * b, 2));
      LossTerms<Var> terms{};
      Var z1 = model->project(t, h1), z2 = model->project(t, h2);
      terms.rep_u = l_rep_u(t, z1, z2, w.tau_u);
      terms.rep_s = l_rep_s(t, t.gather_rows(z1, {0, 1}), t.gather_rows(z2, {0, 1}), y, w.tau_c);
      Var l1 = model->cosine_logits(t, h1), l2 = model->cosine_logits(t, h2);
      Var p1 = t.softmax_rows(l1, w.tau_s), p2 = t.softmax_rows(l2, w.tau_s);
      Var q = fz ? t.constant(fz->q) : pseudo_labels(t, l2, w.tau_t);
      Var anchor = fz ? t.constant(fz->anchor) : t.gather_rows(p1, {0, 2});
      if (capture) *capture = {q.value(), anchor.value()};
      const ClsTerms c = l_cls(t, p1, p2, q, {0, 1}, y, w.lambda, w.epsilon);
      terms.cls_u = c.unsup;
      terms.cls_s = c.sup;
      terms.entropy = c.entropy;
      terms.kl = l_kl_sva(t, anchor, model->classify(t, hs, w.tau_s));
      const SsrTerms s = l_ssr(t, t.gather_rows(h1, {2, 3}), {0, 2}, *bank, 0.1);
      terms.ssr_pos = s.pos;
      terms.ssr_neg = s.neg;
      return total_loss(terms, w, w.beta);
    };
    // ReLU is not differentiable at 0; keep every pre-activation clear of
    // the kink by more than the stencil can move it.
    Tensor in = random_tensor(rng, 3 * b, dims.input, 0.0, 1.0);
    while (min_abs_preactivation(*model, in) < 0.01) in = random_tensor(rng, 3 * b, dims.input, 0.0, 1.0);
    Frozen fz;
    {
      Tape t0;
      objective(t0, t0.constant(in), nullptr, &fz);
    }
    return Instance{std::move(in), [=](Tape& t, Var x) { return objective(t, x, &fz, nullptr); }};
  });
  return f;
}

}  // namespace detail

inline std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opt = {}) {
  std::vector<GradSuiteEntry> out;
  std::mt19937_64 rng(opt.seed);
  for (auto& [name, factory] : detail::loss_factories()) {
    GradSuiteEntry e;
    e.name = name;
    for (std::size_t i = 0; i < opt.instances; ++i) {
      detail::Instance inst = factory(rng);
      ScalarFn fn = inst.fn;
      if (opt.fault_inject) fn = [inner = inst.fn](Tape& t, Var x) { return inner(t, detail::faulty_identity(t, x)); };
      const GradCheckReport r = grad_check(fn, inst.input, opt.step, opt.tolerance, opt.stencil);
      ++e.instances;
      if (!r.passed()) ++e.failed_instances;
      e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace cleargcd
