#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "cleargcd/dataset_io.hpp"
#include "cleargcd/datagen.hpp"
#include "test_util.hpp"

using namespace cleargcd;
using namespace cleargcd::testing;

namespace {

ShortcutSpec small_spec(double rho, int per_class = 40, std::uint64_t seed = 3) {
  ShortcutSpec s;
  s.height = 16;
  s.width = 16;
  s.samples_per_class = per_class;
  s.shortcut_strength = rho;
  s.seed = seed;
  return s;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cleargcd_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Datagen, FullStrengthLinksEveryKnownSample) {
  const Dataset ds = generate_dataset(small_spec(1.0));
  for (const auto& s : ds.samples)
    if (s.label < ds.spec.num_known_classes) {
      EXPECT_EQ(s.background_id, s.label);
    }
}

TEST(Datagen, ZeroStrengthHasNoMutualInformation) {
  ShortcutSpec spec = small_spec(0.0, 1000);
  spec.height = 8;
  spec.width = 8;
  const Dataset ds = generate_dataset(spec);
  ASSERT_EQ(ds.samples.size(), 10000u);
  const int K = spec.num_classes(), nb = spec.num_backgrounds();
  std::vector<double> joint(static_cast<std::size_t>(K * nb), 0.0), pk(K, 0.0), pb(nb, 0.0);
  const double n = static_cast<double>(ds.samples.size());
  for (const auto& s : ds.samples) {
    joint[static_cast<std::size_t>(s.label * nb + s.background_id)] += 1.0 / n;
    pk[s.label] += 1.0 / n;
    pb[s.background_id] += 1.0 / n;
  }
  double mi = 0.0;
  for (int k = 0; k < K; ++k)
    for (int b = 0; b < nb; ++b) {
      const double p = joint[static_cast<std::size_t>(k * nb + b)];
      if (p > 0.0) mi += p * std::log(p / (pk[k] * pb[b]));
    }
  // Plug-in bias is about (K-1)(nb-1)/(2n) = 0.0018 nats.
  EXPECT_LT(mi, 0.01);
}

TEST(Datagen, SameSeedIsBitIdentical) {
  const Dataset a = generate_dataset(small_spec(0.95));
  const Dataset b = generate_dataset(small_spec(0.95));
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].image, b.samples[i].image);
    EXPECT_EQ(a.samples[i].background_id, b.samples[i].background_id);
  }
  const Dataset c = generate_dataset(small_spec(0.95, 40, 4));
  EXPECT_NE(a.samples[0].image, c.samples[0].image);
}

TEST(Datagen, PixelsInUnitRange) {
  for (const auto& s : generate_dataset(small_spec(0.5)).samples)
    for (double v : s.image.storage()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
}

TEST(Datagen, InvalidSpecRejected) {
  EXPECT_THROW(generate_dataset(small_spec(1.5)), std::invalid_argument);
  ShortcutSpec s = small_spec(0.5);
  s.num_novel_classes = 0;
  EXPECT_THROW(generate_dataset(s), std::invalid_argument);
  s = small_spec(0.5);
  s.num_known_classes = 15;
  s.num_novel_classes = 10;
  EXPECT_THROW(generate_dataset(s), std::invalid_argument);
}

TEST(Split, ArithmeticMatchesFractions) {
  const Dataset ds = generate_dataset(small_spec(0.95, 100));
  const GcdSplit split = make_gcd_split(ds, 0.5, 0.5, 0);
  EXPECT_EQ(split.labeled.size(), 250u);
  EXPECT_EQ(split.unlabeled.size(), 750u);
  EXPECT_EQ(split.known_classes.size(), 5u);
  EXPECT_EQ(split.K, 10);
}

TEST(Split, LabeledSamplesAreKnownOnEverySeed) {
  const Dataset ds = generate_dataset(small_spec(0.95, 20));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GcdSplit split = make_gcd_split(ds, 0.5, 0.5, seed);
    for (const auto& s : split.labeled) EXPECT_TRUE(split.is_known(s.label));
    for (const auto& s : split.labeled) EXPECT_TRUE(s.is_labeled);
    for (const auto& s : split.unlabeled) EXPECT_FALSE(s.is_labeled);
    EXPECT_EQ(split.labeled.size() + split.unlabeled.size(), ds.samples.size());
  }
}

TEST(Split, EmptyNovelSetRejected) {
  const Dataset ds = generate_dataset(small_spec(0.95, 10));
  EXPECT_THROW(make_gcd_split(ds, 0.999, 0.5, 0), std::invalid_argument);
  EXPECT_THROW(make_gcd_split(ds, 1.0, 0.5, 0), std::invalid_argument);
  EXPECT_THROW(make_gcd_split(ds, 0.5, 0.0, 0), std::invalid_argument);
}

TEST(Split, SeedChangesLabeledMembers) {
  const Dataset ds = generate_dataset(small_spec(0.95, 20));
  EXPECT_EQ(make_gcd_split(ds, 0.5, 0.5, 1).labeled_index, make_gcd_split(ds, 0.5, 0.5, 1).labeled_index);
  EXPECT_NE(make_gcd_split(ds, 0.5, 0.5, 1).labeled_index, make_gcd_split(ds, 0.5, 0.5, 2).labeled_index);
}

TEST(Swap, Invariants) {
  const Dataset ds = generate_dataset(small_spec(0.95));
  const auto before = ds.samples;
  const auto swapped = swap_backgrounds(ds.samples, ds.spec, 9);
  ASSERT_EQ(swapped.size(), ds.samples.size());
  const auto region = GlyphRegion::of(ds.spec);
  const std::size_t H = ds.spec.height, W = ds.spec.width;
  for (std::size_t i = 0; i < swapped.size(); ++i) {
    EXPECT_EQ(swapped[i].label, ds.samples[i].label);
    EXPECT_NE(swapped[i].background_id, swapped[i].label);
    EXPECT_EQ(ds.samples[i].image, before[i].image);
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c)
          if (region.contains(r, c)) {
            ASSERT_EQ(swapped[i].image[(ch * H + r) * W + c], ds.samples[i].image[(ch * H + r) * W + c]);
          }
  }
}

TEST(Shortcut, BackgroundProbePresentAndRemovable) {
  const Dataset ds = generate_dataset(small_spec(1.0, 100));
  const GcdSplit split = make_gcd_split(ds, 0.5, 0.5, 0);
  const LogisticProbe probe(features(split.labeled, ds.spec, background_features), truth_labels(split.labeled),
                            ds.spec.num_classes());
  std::vector<Sample> known_unlabeled;
  for (const auto& s : split.unlabeled)
    if (split.is_known(s.label)) known_unlabeled.push_back(s);
  EXPECT_GE(probe.accuracy(features(known_unlabeled, ds.spec, background_features), truth_labels(known_unlabeled)), 0.9);
  const auto swapped = swap_backgrounds(known_unlabeled, ds.spec, 5);
  EXPECT_LE(probe.accuracy(features(swapped, ds.spec, background_features), truth_labels(swapped)),
            1.0 / ds.spec.num_backgrounds() + 0.05);
}

TEST(Shortcut, GlyphProbeSufficientOnEverySplit) {
  const Dataset train = generate_dataset(small_spec(0.95, 60, 1));
  const LogisticProbe probe(features(train.samples, train.spec, glyph_features), truth_labels(train.samples),
                            train.spec.num_classes());
  const Dataset ds = generate_dataset(small_spec(0.95, 60, 2));
  const GcdSplit split = make_gcd_split(ds, 0.5, 0.5, 0);
  EXPECT_GE(probe.accuracy(features(split.labeled, ds.spec, glyph_features), truth_labels(split.labeled)), 0.95);
  EXPECT_GE(probe.accuracy(features(split.unlabeled, ds.spec, glyph_features), truth_labels(split.unlabeled)), 0.95);
  const auto swapped = swap_backgrounds(split.unlabeled, ds.spec, 5);
  EXPECT_GE(probe.accuracy(features(swapped, ds.spec, glyph_features), truth_labels(swapped)), 0.95);
}

TEST(DatasetIo, RoundTripIsBitIdentical) {
  const Dataset ds = generate_dataset(small_spec(0.95, 10));
  const GcdSplit split = make_gcd_split(ds, 0.5, 0.5, 7);
  const auto dir = temp_dir("roundtrip");
  write_dataset(dir, ds, split, SplitParams{0.5, 0.5, 7});
  EXPECT_TRUE(std::filesystem::exists(dir / "meta.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "images.bin"));
  EXPECT_TRUE(std::filesystem::exists(dir / "labels.bin"));
  const StoredDataset back = read_dataset(dir);
  ASSERT_EQ(back.dataset.samples.size(), ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(back.dataset.samples[i].image, ds.samples[i].image);
    EXPECT_EQ(back.dataset.samples[i].label, ds.samples[i].label);
    EXPECT_EQ(back.dataset.samples[i].background_id, ds.samples[i].background_id);
  }
  EXPECT_EQ(back.split.labeled_index, split.labeled_index);
  EXPECT_EQ(back.split.known_classes, split.known_classes);
  EXPECT_EQ(back.split.K, split.K);
  std::filesystem::remove_all(dir);
}

TEST(DatasetIo, RejectsMissingAndTruncated) {
  EXPECT_THROW(read_dataset(temp_dir("absent")), std::runtime_error);
  const Dataset ds = generate_dataset(small_spec(0.95, 4));
  const auto dir = temp_dir("truncated");
  write_dataset(dir, ds, make_gcd_split(ds, 0.5, 0.5, 0), SplitParams{0.5, 0.5, 0});
  std::filesystem::resize_file(dir / "images.bin", 16);
  EXPECT_THROW(read_dataset(dir), std::runtime_error);
  std::filesystem::remove_all(dir);
}
