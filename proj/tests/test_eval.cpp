#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cleargcd/datagen.hpp"
#include "cleargcd/eval.hpp"
#include "test_util.hpp"

using namespace cleargcd;
using namespace cleargcd::testing;

namespace {

std::int64_t brute_force_best(const CostMatrix& m) {
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

std::int64_t matched(const CostMatrix& m, const std::vector<int>& a) {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < m.K; ++i) s += m.at(i, static_cast<std::size_t>(a[i]));
  return s;
}

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int K) {
  std::uniform_int_distribution<int> u(0, K - 1);
  std::vector<int> y(n);
  for (int& v : y) v = u(rng);
  return y;
}

void expect_consistent(const EvalReport& r) {
  EXPECT_EQ(r.n_all, r.n_old + r.n_new);
  EXPECT_EQ(r.matched_all, r.matched_old + r.matched_new);
  EXPECT_EQ(std::llround(r.acc_all * static_cast<double>(r.n_all)),
            std::llround(r.acc_old * static_cast<double>(r.n_old)) + std::llround(r.acc_new * static_cast<double>(r.n_new)));
}

}  // namespace

TEST(Hungarian, MatchesBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int K = 1 + trial % 6;
    const auto preds = random_labels(rng, 40, K), truths = random_labels(rng, 40, K);
    const CostMatrix m = CostMatrix::build(preds, truths, static_cast<std::size_t>(K));
    const auto a = hungarian_max(m);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (int k = 0; k < K; ++k) ASSERT_EQ(sorted[static_cast<std::size_t>(k)], k);
    EXPECT_EQ(matched(m, a), brute_force_best(m)) << "trial " << trial;
  }
}

TEST(Hungarian, PermutedLabelsScoreOne) {
  std::mt19937_64 rng(2);
  const auto truths = random_labels(rng, 500, 10);
  std::vector<int> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> preds;
  for (int y : truths) preds.push_back(perm[static_cast<std::size_t>(y)]);
  const EvalReport r = hungarian_accuracy(preds, truths, {0, 1, 2, 3, 4}, 10);
  EXPECT_EQ(r.acc_all, 1.0);
  EXPECT_EQ(r.acc_old, 1.0);
  EXPECT_EQ(r.acc_new, 1.0);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(r.assignment[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])], k);
}

TEST(Hungarian, RandomPredictionsNearChance) {
  std::mt19937_64 rng(3);
  const auto truths = random_labels(rng, 20000, 10), preds = random_labels(rng, 20000, 10);
  EXPECT_NEAR(hungarian_accuracy(preds, truths, {0, 1, 2, 3, 4}, 10).acc_all, 0.1, 0.02);
}

TEST(Hungarian, InvariantToRelabelingPredictions) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto truths = random_labels(rng, 200, 6), preds = random_labels(rng, 200, 6);
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> relabeled;
    for (int p : preds) relabeled.push_back(perm[static_cast<std::size_t>(p)]);
    EXPECT_EQ(hungarian_accuracy(preds, truths, {0, 1, 2}, 6).matched_all,
              hungarian_accuracy(relabeled, truths, {0, 1, 2}, 6).matched_all);
  }
}

TEST(Hungarian, ReportIdentityHolds) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto truths = random_labels(rng, 37 + trial, 8), preds = random_labels(rng, 37 + trial, 8);
    expect_consistent(hungarian_accuracy(preds, truths, {1, 3, 5, 7}, 8));
  }
}

TEST(Hungarian, EmptySubsetsReportZero) {
  const EvalReport r = hungarian_accuracy({0, 1}, {0, 1}, {0, 1}, 2);
  EXPECT_EQ(r.n_new, 0u);
  EXPECT_EQ(r.acc_new, 0.0);
  EXPECT_EQ(r.acc_old, 1.0);
}

TEST(Hungarian, InvalidInputsRejected) {
  EXPECT_THROW(hungarian_accuracy({0, 1}, {0}, {0}, 2), std::invalid_argument);
  EXPECT_THROW(hungarian_accuracy({0, 2}, {0, 1}, {0}, 2), std::out_of_range);
  EXPECT_THROW(hungarian_accuracy({0, -1}, {0, 1}, {0}, 2), std::out_of_range);
}

TEST(Argmax, TiesGoToLowestIndex) {
  const Tensor p = Tensor::matrix(3, 3, {0.2, 0.4, 0.4, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0.1, 0.1, 0.8});
  EXPECT_EQ(argmax_rows(p), (std::vector<int>{1, 0, 2}));
  EXPECT_EQ(argmax_rows(Tensor::matrix(2, 1, {1.0, 1.0})), (std::vector<int>{0, 0}));
}

TEST(ShortcutGap, IdenticalSetsGiveZero) {
  std::mt19937_64 rng(6);
  const auto truths = random_labels(rng, 300, 10), preds = random_labels(rng, 300, 10);
  EXPECT_EQ(shortcut_gap(preds, truths, preds, truths, {0, 1, 2, 3, 4}, 10), 0.0);
  EXPECT_THROW(shortcut_gap(preds, truths, {0}, {0}, {0}, 10), std::invalid_argument);
}

// Oracle clusterers on generated images: one reads only the glyph, the
// other only the background.
TEST(ShortcutGap, GlyphOracleNearZeroBackgroundOracleLarge) {
  ShortcutSpec train_spec;
  train_spec.height = 16;
  train_spec.width = 16;
  train_spec.samples_per_class = 60;
  train_spec.seed = 1;
  const Dataset train = generate_dataset(train_spec);
  const int K = train_spec.num_classes();
  const LogisticProbe glyph(features(train.samples, train.spec, glyph_features), truth_labels(train.samples), K);

  ShortcutSpec spec = train_spec;
  spec.shortcut_strength = 1.0;
  spec.seed = 2;
  const Dataset ds = generate_dataset(spec);
  const GcdSplit split = make_gcd_split(ds, 0.5, 0.5, 0);
  const auto before = split.unlabeled;
  const auto swapped = swap_backgrounds(split.unlabeled, spec, 8);
  const auto truths = truth_labels(split.unlabeled), swapped_truths = truth_labels(swapped);
  const double gap_glyph =
      shortcut_gap(glyph.predict(features(split.unlabeled, spec, glyph_features)), truths,
                   glyph.predict(features(swapped, spec, glyph_features)), swapped_truths, split.known_classes, K);
  EXPECT_NEAR(gap_glyph, 0.0, 0.02);

  // Novel classes draw random backgrounds, so the shortcut lives in the known ones.
  std::vector<Sample> known;
  for (const auto& s : split.unlabeled)
    if (split.is_known(s.label)) known.push_back(s);
  const auto known_swapped = swap_backgrounds(known, spec, 8);
  const LogisticProbe background(features(split.labeled, spec, background_features), truth_labels(split.labeled), K);
  const double gap_bg = shortcut_gap(background.predict(features(known, spec, background_features)), truth_labels(known),
                                     background.predict(features(known_swapped, spec, background_features)),
                                     truth_labels(known_swapped), split.known_classes, K);
  EXPECT_GE(gap_bg, 0.5);
  for (std::size_t i = 0; i < before.size(); ++i) ASSERT_EQ(before[i].image, split.unlabeled[i].image);
}

TEST(Evaluate, ModelReportConsistentAndRowsStochastic) {
  ShortcutSpec spec;
  spec.samples_per_class = 8;
  const Dataset ds = generate_dataset(spec);
  const GcdSplit split = make_gcd_split(ds, 0.5, 0.5, 0);
  const Model m = Model::init(3, ModelDims{});
  const auto swapped = swap_backgrounds(split.unlabeled, spec, 1);
  const EvalReport r = evaluate(m, split.unlabeled, swapped, 0.1, split.known_classes);
  expect_consistent(r);
  EXPECT_EQ(r.n_all, split.unlabeled.size());
  const Tensor p = predict_probabilities(m, split.unlabeled, 0.1);
  for (std::size_t row = 0; row < p.rows(); ++row) {
    double s = 0.0;
    for (double v : p.row(row)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const auto j = r.to_json();
  for (const char* key : {"acc_all", "acc_old", "acc_new", "shortcut_gap", "assignment"}) EXPECT_TRUE(j.contains(key));
}
