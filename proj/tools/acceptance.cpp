// Acceptance checks: one PASS/FAIL line per criterion, tolerances pinned here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cleargcd/cleargcd.hpp"
#include "cleargcd/gradsuite.hpp"

namespace fs = std::filesystem;
using namespace cleargcd;

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr std::size_t kGradInstances = 50;
constexpr double kGradBudgetSec = 120.0;
constexpr int kHungarianInstances = 1000;
constexpr double kHungarianBudgetSec = 60.0;
constexpr double kClosedFormTolerance = 1e-9;
constexpr double kGapMargin = 0.05;
constexpr double kNewMargin = 0.03;
constexpr double kTrainingBudgetSec = 1200.0;
constexpr double kAblationSlack = 0.005;
constexpr double kRowSumTolerance = 1e-12;
constexpr double kAccountingTolerance = 1e-10;
const std::vector<std::uint64_t> kSeeds{0, 1, 2};
const std::vector<std::uint64_t> kFallbackSeeds{3, 4};
const std::vector<std::string> kSettings{"baseline", "sva", "ssr", "full"};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool report(int id, bool pass, const std::string& title, const std::string& detail) {
  std::cout << "criterion " << id << ' ' << (pass ? "PASS" : "FAIL") << "  " << title << ": " << detail << std::endl;
  return pass;
}

// ---- 1 ---------------------------------------------------------------------

bool gradient_suite() {
  const auto t0 = Clock::now();
  GradSuiteOptions opt;
  opt.instances = kGradInstances;
  opt.tolerance = kGradTolerance;
  const auto entries = run_gradient_suite(opt);
  const double sec = seconds_since(t0);
  bool ok = !entries.empty();
  double worst = 0.0;
  std::string failed;
  for (const auto& e : entries) {
    worst = std::max(worst, e.max_rel_error);
    if (!e.passed() || e.instances < 20) {
      ok = false;
      failed += " " + e.name;
    }
  }
  ok = ok && sec < kGradBudgetSec;
  return report(1, ok, "gradient suite",
                std::to_string(entries.size()) + " losses x " + std::to_string(kGradInstances) +
                    " instances, max rel err " + fmt("%.2e", worst) + ", " + fmt("%.1f", sec) + " s" +
                    (failed.empty() ? "" : ", failing:" + failed));
}

// ---- 2 ---------------------------------------------------------------------

std::int64_t brute_force(const CostMatrix& m) {
  std::vector<int> perm(m.K);
  std::iota(perm.begin(), perm.end(), 0);
  std::int64_t best = 0;
  do {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < m.K; ++i) s += m.at(i, static_cast<std::size_t>(perm[i]));
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

bool hungarian_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  int mismatches = 0;
  for (int trial = 0; trial < kHungarianInstances; ++trial) {
    const int K = 1 + trial % 6;
    const std::size_t n = 1 + rng() % 80;
    std::uniform_int_distribution<int> u(0, K - 1);
    std::vector<int> preds(n), truths(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = u(rng);
      truths[i] = u(rng);
    }
    const CostMatrix m = CostMatrix::build(preds, truths, static_cast<std::size_t>(K));
    const auto a = hungarian_max(m);
    std::int64_t got = 0;
    for (std::size_t i = 0; i < m.K; ++i) got += m.at(i, static_cast<std::size_t>(a[i]));
    const std::set<int> image(a.begin(), a.end());
    mismatches += got != brute_force(m) || image.size() != m.K;
  }
  const double sec = seconds_since(t0);
  return report(2, mismatches == 0 && sec < kHungarianBudgetSec, "Hungarian oracle",
                std::to_string(kHungarianInstances - mismatches) + "/" + std::to_string(kHungarianInstances) +
                    " instances match brute force, " + fmt("%.2f", sec) + " s");
}

// ---- 3 ---------------------------------------------------------------------

struct ClosedForm {
  std::string name;
  std::function<double()> got;
  double want;
};

double value(const std::function<Var(Tape&)>& f) {
  Tape t;
  return f(t).value().item();
}

PrototypeBank bank_of(const std::vector<int>& known, const Tensor& rows) {
  PrototypeBank b(known, rows.cols(), 1);
  b.refresh_from_features(rows, known, 0);
  return b;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.shape() == b.shape() ? m : INFINITY;
}

Tensor image(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({3, 16, 16});
  for (double& v : t.storage()) v = u(rng);
  return t;
}

std::vector<ClosedForm> closed_forms() {
  const double e = std::exp(1.0);
  const double log2 = std::log(2.0);
  const Tensor eye2 = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  const auto uniform = [](std::size_t rows, std::size_t k) { return Tensor({rows, k}, 1.0 / static_cast<double>(k)); };
  std::vector<ClosedForm> c;
  c.push_back({"matmul(I3, A) == A", [] {
                 Tape t;
                 const Tensor a = Tensor::matrix(3, 2, {1.5, -2.0, 0.25, 4.0, -1.0, 3.0});
                 Tensor i3({3, 3});
                 for (std::size_t k = 0; k < 3; ++k) i3(k, k) = 1.0;
                 return max_abs_diff(t.matmul(t.constant(i3), t.constant(a)).value(), a);
               },
               0.0});
  c.push_back({"softmax_rows([0, ln 3])[1] = 0.75", [] {
                 Tape t;
                 return t.softmax_rows(t.constant(Tensor::matrix(1, 2, {0.0, std::log(3.0)})), 1.0).value()(0, 1);
               },
               0.75});
  c.push_back({"l2_normalize_rows([3, 4])[0] = 0.6", [] {
                 Tape t;
                 return t.l2_normalize_rows(t.constant(Tensor::matrix(1, 2, {3.0, 4.0}))).value()(0, 0);
               },
               0.6});
  c.push_back({"l_rep_u orthogonal pair = -1",
               [=] { return value([&](Tape& t) { return l_rep_u(t, t.constant(eye2), t.constant(eye2), 1.0); }); },
               -1.0});
  c.push_back({"l_rep_u full symmetry = log(B-1)", [] {
                 const Tensor z({5, 3}, 1.0 / std::sqrt(3.0));
                 return value([&](Tape& t) { return l_rep_u(t, t.constant(z), t.constant(z), 0.07); });
               },
               std::log(4.0)});
  c.push_back({"l_rep_s orthogonal same-class pair = +1", [=] {
                 return value([&](Tape& t) { return l_rep_s(t, t.constant(eye2), t.constant(eye2), {3, 3}, 1.0); });
               },
               1.0});
  c.push_back({"uniform cross-entropy = log K", [=] {
                 return value([&](Tape& t) { return cross_entropy(t, t.constant(uniform(4, 7)), t.constant(uniform(4, 7))); });
               },
               std::log(7.0)});
  c.push_back({"uniform mean entropy = log K", [=] {
                 return value([&](Tape& t) { return mean_entropy(t, t.constant(uniform(3, 6)), t.constant(uniform(3, 6))); });
               },
               std::log(6.0)});
  c.push_back({"uniform regularizer term = -eps log K", [=] {
                 Tape t;
                 const Var u = t.constant(uniform(3, 6));
                 const ClsTerms terms = l_cls(t, u, u, u, {}, {}, 0.0, 0.7);
                 return terms.total.value().item() - terms.unsup.value().item();
               },
               -0.7 * std::log(6.0)});
  c.push_back({"confident correct supervised loss = 0", [] {
                 const double d = 1e-13;
                 const Tensor p = Tensor::matrix(2, 3, {1.0 - 2 * d, d, d, d, d, 1.0 - 2 * d});
                 Tape t;
                 return l_cls(t, t.constant(p), t.constant(p), t.constant(p), {0, 1}, {0, 2}, 0.35, 1.0).sup.value().item();
               },
               0.0});
  c.push_back({"KL of identical distributions = 0", [] {
                 const Tensor p = Tensor::matrix(2, 3, {0.2, 0.5, 0.3, 0.6, 0.1, 0.3});
                 return value([&](Tape& t) { return l_kl_sva(t, t.constant(p), t.constant(p)); });
               },
               0.0});
  c.push_back({"KL((1,0) || (0.5,0.5)) = log 2", [] {
                 return value([&](Tape& t) {
                   return l_kl_sva(t, t.constant(Tensor::matrix(1, 2, {1.0, 0.0})), t.constant(Tensor::matrix(1, 2, {0.5, 0.5})));
                 });
               },
               log2});
  c.push_back({"empty SVA pairing KL = 0",
               [] { return value([&](Tape& t) { return l_kl_sva(t, t.constant(Tensor({0, 3})), t.constant(Tensor({0, 3}))); }); },
               0.0});
  c.push_back({"total with beta = 0, no KL = alpha (rep + cls)", [] {
                 LossWeights w;
                 w.alpha = 1.3;
                 const LossTerms<double> t{0.7, 1.1, 2.0, 0.4, 1.5, 0.0, 0.9, 0.8};
                 const double rep = (1 - w.lambda) * t.rep_u + w.lambda * t.rep_s;
                 const double cls = (1 - w.lambda) * (t.cls_u - w.epsilon * t.entropy) + w.lambda * t.cls_s;
                 return total_loss(t, w, 0.0) - w.alpha * (rep + cls);
               },
               0.0});
  c.push_back({"bank prototype of one sample is that feature", [] {
                 const Tensor f = Tensor::matrix(1, 3, {0.3, -1.2, 2.0});
                 return max_abs_diff(bank_of({4}, f).prototypes(), f);
               },
               0.0});
  c.push_back({"bank prototype of v and -v is 0", [] {
                 PrototypeBank b({0}, 2, 1);
                 b.refresh_from_features(Tensor::matrix(2, 2, {1.5, -2.0, -1.5, 2.0}), {0, 0}, 0);
                 return max_abs_diff(b.prototypes(), Tensor({1, 2}));
               },
               0.0});
  c.push_back({"l_pa_pos single known class = 0", [] {
                 const PrototypeBank b = bank_of({3}, Tensor::matrix(1, 2, {0.4, 0.9}));
                 return value([&](Tape& t) { return l_pa_pos(t, t.constant(Tensor::matrix(1, 2, {1.0, -2.0})), {3}, b, 0.1); });
               },
               0.0});
  c.push_back({"l_pa_pos aligned, orthogonal other, tau 1 = -log(e/(e+1))", [=] {
                 const PrototypeBank b = bank_of({0, 1}, eye2);
                 return value([&](Tape& t) { return l_pa_pos(t, t.constant(Tensor::matrix(1, 2, {1.0, 0.0})), {0}, b, 1.0); });
               },
               -std::log(e / (e + 1.0))});
  c.push_back({"l_pa_pos equal similarity = log |Y_l|", [] {
                 Tensor eye3({3, 3});
                 for (std::size_t k = 0; k < 3; ++k) eye3(k, k) = 1.0;
                 const PrototypeBank b = bank_of({0, 1, 2}, eye3);
                 return value([&](Tape& t) { return l_pa_pos(t, t.constant(Tensor::matrix(1, 3, {1.0, 1.0, 1.0})), {1}, b, 0.1); });
               },
               std::log(3.0)});
  c.push_back({"l_pa_neg at sim 0 = log 2", [] {
                 const PrototypeBank b = bank_of({0, 1}, Tensor::matrix(2, 3, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0}));
                 return value([&](Tape& t) { return l_pa_neg(t, t.constant(Tensor::matrix(1, 3, {0.0, 0.0, 2.0})), b); });
               },
               log2});
  c.push_back({"l_pa_neg at sim -1 = -log(1 - sigmoid(-1))", [] {
                 const PrototypeBank b = bank_of({0, 1}, Tensor::matrix(2, 2, {1.0, 0.0, 1.0, 0.0}));
                 return value([&](Tape& t) { return l_pa_neg(t, t.constant(Tensor::matrix(1, 2, {-3.0, 0.0})), b); });
               },
               -std::log(1.0 - 1.0 / (1.0 + e))});
  c.push_back({"l_ssr with no unlabeled samples = 0", [=] {
                 const PrototypeBank b = bank_of({0, 1}, eye2);
                 Tape t;
                 const SsrTerms s = l_ssr(t, t.constant(Tensor({0, 2})), {}, b, 0.1);
                 return s.pos.value().item() + s.neg.value().item();
               },
               0.0});
  c.push_back({"classify aligned, K=2, tau 1 = e/(e+1)", [=] {
                 Model m = Model::init(0, {6, 5, 2, 3, 2});
                 m.params().prototypes = eye2;
                 Tape t;
                 return m.classify(t, t.constant(Tensor::matrix(1, 2, {1.0, 0.0})), 1.0).value()(0, 0);
               },
               e / (e + 1.0)});
  c.push_back({"classify equidistant = 1/K", [=] {
                 Model m = Model::init(0, {6, 5, 2, 3, 2});
                 m.params().prototypes = eye2;
                 Tape t;
                 return m.classify(t, t.constant(Tensor::matrix(1, 2, {1.0, 1.0})), 0.1).value()(0, 1);
               },
               0.5});
  c.push_back({"classify K=1 = 1", [] {
                 Model m = Model::init(0, {6, 5, 2, 3, 1});
                 Tape t;
                 return m.classify(t, t.constant(Tensor::matrix(1, 2, {0.3, -0.8})), 0.1).value()(0, 0);
               },
               1.0});
  c.push_back({"patch replace x with itself = x", [] {
                 double worst = 0.0;
                 for (std::uint64_t s = 0; s < 20; ++s)
                   worst = std::max(worst, max_abs_diff(sva_patch_replace(image(s), image(s), sample_mask(MaskSpec{}, 16, 16, s)), image(s)));
                 return worst;
               },
               0.0});
  c.push_back({"patch replace with all-ones mask = x_i",
               [] { return max_abs_diff(sva_patch_replace(image(1), image(2), Tensor({16, 16}, 1.0)), image(1)); }, 0.0});
  c.push_back({"patch replace with all-zeros mask = x_j",
               [] { return max_abs_diff(sva_patch_replace(image(1), image(2), Tensor({16, 16}, 0.0)), image(2)); }, 0.0});
  c.push_back({"identity weak draw = input", [] { return max_abs_diff(weak_augment(image(3), WeakDraw{}), image(3)); }, 0.0});
  return c;
}

bool closed_form_values() {
  int failed = 0;
  double worst = 0.0;
  std::string names;
  const auto forms = closed_forms();
  for (const auto& f : forms) {
    double err = INFINITY;
    try {
      err = std::abs(f.got() - f.want);
    } catch (const std::exception& ex) {
      names += " [" + f.name + ": " + ex.what() + "]";
    }
    worst = std::max(worst, err);
    if (!(err <= kClosedFormTolerance)) {
      ++failed;
      names += " [" + f.name + "]";
    }
  }
  return report(3, failed == 0, "closed-form values",
                std::to_string(forms.size() - static_cast<std::size_t>(failed)) + "/" + std::to_string(forms.size()) +
                    " within 1e-9, max err " + fmt("%.2e", worst) + names);
}

// ---- 4, 5, 7, 8 ------------------------------------------------------------

struct Cell {
  EvalReport report;
  double seconds = 0.0;
};

struct Audit {
  std::size_t reports = 0, identity_failures = 0, evaluations = 0;
  double worst_row_sum = 0.0;
  std::size_t steps = 0, records = 0;
  double worst_accounting = 0.0;
};

bool identity_holds(const EvalReport& r) {
  return r.n_all == r.n_old + r.n_new && r.matched_all == r.matched_old + r.matched_new &&
         std::llround(r.acc_all * static_cast<double>(r.n_all)) ==
             std::llround(r.acc_old * static_cast<double>(r.n_old)) + std::llround(r.acc_new * static_cast<double>(r.n_new));
}

double worst_row_sum(const Tensor& p) {
  double w = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double v : p.row(r)) s += v;
    w = std::max(w, std::abs(s - 1.0));
  }
  return w;
}

RunConfig setting_config(const RunConfig& base, const std::string& name) {
  for (const auto& s : expand_sweep(base, SweepSpec{"components", {name}, {0}}))
    if (s.name == name) return s.config;
  throw std::logic_error("unknown setting " + name);
}

Cell run_cell(const RunConfig& base, const std::string& setting, std::uint64_t seed, Audit& audit) {
  const RunConfig cfg = with_seed(setting_config(base, setting), seed);
  const auto t0 = Clock::now();
  const ExperimentResult res = run_experiment(cfg, [&](const StepRecord& s) {
    ++audit.steps;
    audit.worst_accounting = std::max(audit.worst_accounting, std::abs(total_loss(s.parts, cfg.loss, s.beta) - s.total));
  });
  Cell cell{res.report, seconds_since(t0)};

  for (std::size_t e = 1; e < res.train.metrics.size(); ++e) {
    const auto& j = res.train.metrics[e];
    const bool ssr_on = cfg.ssr.enabled && static_cast<int>(e) - 1 >= cfg.ssr.warmup_epochs;
    const LossTerms<double> t{j["l_rep_u"], j["l_rep_s"], j["l_cls_u"], j["l_cls_s"],
                              j["h_mean_entropy"], j["l_kl"], j["l_ssr_pos"], j["l_ssr_neg"]};
    ++audit.records;
    audit.worst_accounting = std::max(
        audit.worst_accounting, std::abs(total_loss(t, cfg.loss, ssr_on ? cfg.loss.beta : 0.0) - j["total"].get<double>()));
  }

  ++audit.reports;
  audit.identity_failures += !identity_holds(res.report);
  const PreparedData data = prepare_data(cfg);
  const EvalSets sets = make_eval_sets(cfg, data.dataset.spec, data.split, false);
  for (const auto* set : {&sets.clean, &sets.swapped}) {
    const Tensor p = predict_probabilities(res.train.model, *set, cfg.loss.tau_s);
    audit.worst_row_sum = std::max(audit.worst_row_sum, worst_row_sum(p));
    audit.evaluations += p.rows();
    const EvalReport r = hungarian_accuracy(argmax_rows(p), labels_of(*set), data.split.known_classes,
                                            static_cast<std::size_t>(data.split.K));
    ++audit.reports;
    audit.identity_failures += !identity_holds(r);
  }
  std::cout << "  " << setting << " seed " << seed << ": acc_all " << fmt("%.4f", cell.report.acc_all) << " acc_old "
            << fmt("%.4f", cell.report.acc_old) << " acc_new " << fmt("%.4f", cell.report.acc_new) << " gap "
            << fmt("%.4f", cell.report.shortcut_gap) << " (" << fmt("%.1f", cell.seconds) << " s)" << std::endl;
  return cell;
}

struct Means {
  double acc_all = 0.0, acc_new = 0.0, gap = 0.0;
};

Means means(const std::vector<Cell>& cells) {
  Means m;
  for (const auto& c : cells) {
    m.acc_all += c.report.acc_all / static_cast<double>(cells.size());
    m.acc_new += c.report.acc_new / static_cast<double>(cells.size());
    m.gap += c.report.shortcut_gap / static_cast<double>(cells.size());
  }
  return m;
}

struct TrainingOutcome {
  bool c4 = false, c5 = false;
};

TrainingOutcome training_criteria(const RunConfig& base, Audit& audit) {
  std::map<std::string, std::vector<Cell>> cells;
  double c4_seconds = 0.0;
  for (const auto& s : kSettings)
    for (auto seed : kSeeds) {
      cells[s].push_back(run_cell(base, s, seed, audit));
      if (s == "baseline" || s == "full") c4_seconds += cells[s].back().seconds;
    }

  const auto margins = [&](std::size_t n) {
    const std::vector<Cell> b(cells["baseline"].begin(), cells["baseline"].begin() + static_cast<std::ptrdiff_t>(n));
    const std::vector<Cell> f(cells["full"].begin(), cells["full"].begin() + static_cast<std::ptrdiff_t>(n));
    const Means mb = means(b), mf = means(f);
    return std::pair{mb.gap - mf.gap, mf.acc_new - mb.acc_new};
  };
  auto [gap_drop, new_gain] = margins(kSeeds.size());
  std::size_t n_seeds = kSeeds.size();
  if (gap_drop < kGapMargin || new_gain < kNewMargin) {
    for (auto seed : kFallbackSeeds)
      for (const char* s : {"baseline", "full"}) {
        cells[s].push_back(run_cell(base, s, seed, audit));
        c4_seconds += cells[s].back().seconds;
      }
    n_seeds += kFallbackSeeds.size();
    std::tie(gap_drop, new_gain) = margins(n_seeds);
  }
  TrainingOutcome out;
  out.c4 = gap_drop >= kGapMargin && new_gain >= kNewMargin && c4_seconds < kTrainingBudgetSec;
  report(4, out.c4, "shortcut suppression",
         "over " + std::to_string(n_seeds) + " seeds full vs baseline: gap smaller by " + fmt("%.4f", gap_drop) +
             " (need >= 0.05), acc_new higher by " + fmt("%.4f", new_gain) + " (need >= 0.03), " +
             fmt("%.0f", c4_seconds) + " s of training (budget 1200 s)");

  std::map<std::string, Means> m;
  for (const auto& s : kSettings)
    m[s] = means(std::vector<Cell>(cells[s].begin(), cells[s].begin() + static_cast<std::ptrdiff_t>(kSeeds.size())));
  const double floor_single = m["baseline"].acc_all - kAblationSlack;
  const double floor_full = std::max(m["sva"].acc_all, m["ssr"].acc_all) - kAblationSlack;
  out.c5 = m["sva"].acc_all >= floor_single && m["ssr"].acc_all >= floor_single && m["full"].acc_all >= floor_full;
  report(5, out.c5, "ablation structure",
         "mean acc_all baseline " + fmt("%.4f", m["baseline"].acc_all) + ", +SVA " + fmt("%.4f", m["sva"].acc_all) +
             ", +SSR " + fmt("%.4f", m["ssr"].acc_all) + ", full " + fmt("%.4f", m["full"].acc_all) +
             " (singles need >= " + fmt("%.4f", floor_single) + ", full needs >= " + fmt("%.4f", floor_full) + ")");
  return out;
}

// ---- 6 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) { return read_text(p); }

bool determinism(const RunConfig& base) {
  RunConfig cfg = base;
  cfg.train.epochs = 3;
  const fs::path root = fs::temp_directory_path() / "cleargcd_acceptance_determinism";
  fs::remove_all(root);
  const SplitParams sp{cfg.data.known_fraction, cfg.data.labeled_fraction, cfg.data.split_seed};
  for (const char* d : {"data_a", "data_b"}) {
    const PreparedData data = prepare_data(cfg);
    write_dataset(root / d, data.dataset, data.split, sp);
  }
  bool data_same = true;
  for (const char* f : {"meta.json", "images.bin", "labels.bin"})
    data_same = data_same && slurp(root / "data_a" / f) == slurp(root / "data_b" / f);

  for (const char* run : {"run_a", "run_b"}) {
    const StoredDataset stored = read_dataset(root / "data_a");
    const EvalSets probe = make_eval_sets(cfg, stored.dataset.spec, stored.split, true);
    const TrainResult res = train_run(cfg, training_view(stored.split), make_probe(cfg, probe, stored.split.known_classes));
    fs::create_directories(root / run);
    write_metrics(root / run / "metrics.jsonl", res.metrics);
    save_checkpoint(root / run / "checkpoint", res.model, {{"config_hash", config_hash(cfg)}});
  }
  const bool metrics_same = slurp(root / "run_a" / "metrics.jsonl") == slurp(root / "run_b" / "metrics.jsonl");
  const bool params_same =
      slurp(root / "run_a" / "checkpoint" / "params.bin") == slurp(root / "run_b" / "checkpoint" / "params.bin");
  fs::remove_all(root);
  return report(6, data_same && metrics_same && params_same, "determinism",
                std::string("dataset files ") + (data_same ? "identical" : "differ") + ", metrics.jsonl " +
                    (metrics_same ? "identical" : "differs") + ", params.bin " + (params_same ? "identical" : "differs"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks; prints one PASS/FAIL line per criterion"};
  std::string config_path = CLEARGCD_ACCEPTANCE_CONFIG;
  std::vector<int> only;
  app.add_option("--config", config_path, "Run config for the training criteria")->capture_default_str();
  app.add_option("--only", only, "Run only these criteria (1-8)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const auto want = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  RunConfig base;
  try {
    base = load_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  bool ok = true;
  try {
    if (want(1)) ok &= gradient_suite();
    if (want(2)) ok &= hungarian_oracle();
    if (want(3)) ok &= closed_form_values();
    Audit audit;
    const bool training = want(4) || want(5) || want(7) || want(8);
    if (training) {
      const TrainingOutcome t = training_criteria(base, audit);
      if (want(4)) ok &= t.c4;
      if (want(5)) ok &= t.c5;
    }
    if (want(6)) ok &= determinism(base);
    if (training) {
      if (want(7))
        ok &= report(7, audit.identity_failures == 0 && audit.worst_row_sum <= kRowSumTolerance, "protocol invariants",
                     std::to_string(audit.reports - audit.identity_failures) + "/" + std::to_string(audit.reports) +
                         " reports satisfy the accuracy identity; worst row-sum error " +
                         fmt("%.2e", audit.worst_row_sum) + " over " + std::to_string(audit.evaluations) + " rows");
      if (want(8))
        ok &= report(8, audit.worst_accounting <= kAccountingTolerance, "loss accounting",
                     "worst |recombined - total| " + fmt("%.2e", audit.worst_accounting) + " over " +
                         std::to_string(audit.steps) + " steps and " + std::to_string(audit.records) + " epoch records");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return ok ? 0 : 1;
}
