#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cleargcd/datagen.hpp"
#include "cleargcd/gradcheck.hpp"
#include "cleargcd/model.hpp"

using namespace cleargcd;

namespace {

ModelDims tiny_dims(std::size_t k = 4) { return {6, 5, 4, 3, k}; }

Tensor random_batch(std::uint64_t seed, std::size_t rows, std::size_t cols) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t({rows, cols});
  for (double& v : t.storage()) v = u(rng);
  return t;
}

}  // namespace

TEST(Model, ZeroParametersGiveZeroFeatures) {
  Model m = Model::init(0, tiny_dims());
  for (Tensor* t : m.params().all()) std::fill(t->storage().begin(), t->storage().end(), 0.0);
  Tape tape;
  Var h = m.forward_features(tape, tape.constant(random_batch(1, 3, 6)));
  for (double v : h.value().storage()) EXPECT_EQ(v, 0.0);
}

TEST(Model, IdenticalInputsGiveIdenticalRows) {
  Model m = Model::init(2, tiny_dims());
  Tensor x({3, 6});
  const Tensor row = random_batch(3, 1, 6);
  for (std::size_t r = 0; r < 3; ++r) std::copy(row.storage().begin(), row.storage().end(), x.row(r).begin());
  Tape tape;
  const Tensor h = m.forward_features(tape, tape.constant(x)).value();
  for (std::size_t c = 0; c < h.cols(); ++c) {
    EXPECT_EQ(h(1, c), h(0, c));
    EXPECT_EQ(h(2, c), h(0, c));
  }
}

TEST(Model, InitIsSeededAndPrototypesUnitNorm) {
  const Model a = Model::init(9, tiny_dims()), b = Model::init(9, tiny_dims()), c = Model::init(10, tiny_dims());
  const auto pa = a.params().all(), pb = b.params().all(), pc = c.params().all();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i], *pb[i]);
  EXPECT_NE(*pa[0], *pc[0]);
  const Tensor& proto = a.params().prototypes;
  for (std::size_t k = 0; k < proto.rows(); ++k) {
    double s = 0.0;
    for (double v : proto.row(k)) s += v * v;
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-12);
  }
}

// The expectation over the init distribution is uniform by symmetry of the
// prototype draw; it is estimated by averaging ten seeds on generated images.
TEST(Model, InitialPredictionsUniformInExpectation) {
  for (int K : {2, 5, 10, 20}) {
    ShortcutSpec spec;
    spec.samples_per_class = 10;
    spec.num_known_classes = K / 2;
    spec.num_novel_classes = K - K / 2;
    const Dataset ds = generate_dataset(spec);
    std::vector<const Tensor*> images;
    for (const auto& s : ds.samples) images.push_back(&s.image);
    ModelDims dims;
    dims.num_classes = static_cast<std::size_t>(K);
    Tensor mean({images.size(), dims.num_classes}, 0.0);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Tensor p = Model::init(seed, dims).probabilities(images, 0.1);
      for (std::size_t i = 0; i < p.numel(); ++i) mean[i] += p[i] / 10.0;
    }
    double worst = 0.0;
    for (double v : mean.storage()) worst = std::max(worst, std::abs(v - 1.0 / K));
    EXPECT_LT(worst, 0.2) << "K=" << K;
  }
}

TEST(Classify, SingleClassIsCertain) {
  Model m = Model::init(0, tiny_dims(1));
  Tape tape;
  const Tensor p = m.classify(tape, tape.constant(random_batch(4, 3, 4)), 0.1).value();
  for (double v : p.storage()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Classify, EquidistantFeatureIsUniform) {
  Model m = Model::init(0, {6, 5, 2, 3, 2});
  m.params().prototypes = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  Tape tape;
  const Tensor p = m.classify(tape, tape.constant(Tensor::matrix(1, 2, {1.0, 1.0})), 0.1).value();
  EXPECT_NEAR(p(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.5, 1e-15);
}

TEST(Classify, HandValueAtUnitTemperature) {
  Model m = Model::init(0, {6, 5, 2, 3, 2});
  m.params().prototypes = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  Tape tape;
  const Tensor p = m.classify(tape, tape.constant(Tensor::matrix(1, 2, {1.0, 0.0})), 1.0).value();
  const double e = std::exp(1.0);
  EXPECT_NEAR(p(0, 0), e / (e + 1.0), 1e-12);
  EXPECT_NEAR(p(0, 1), 1.0 / (e + 1.0), 1e-12);
}

TEST(Classify, ScaleInvariantAndRowStochastic) {
  Model m = Model::init(5, tiny_dims(5));
  const Tensor h = random_batch(6, 8, 4);
  Tensor h3 = h;
  for (double& v : h3.storage()) v *= 3.7;
  Tape tape;
  const Tensor p = m.classify(tape, tape.constant(h), 0.1).value();
  Model scaled = m;
  for (double& v : scaled.params().prototypes.storage()) v *= 0.25;
  const Tensor q = scaled.classify(tape, tape.constant(h3), 0.1).value();
  for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_NEAR(p[i], q[i], 1e-10);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double v : p.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Classify, NonPositiveTemperatureRejected) {
  Model m = Model::init(0, tiny_dims());
  Tape tape;
  EXPECT_THROW(m.classify(tape, tape.constant(random_batch(1, 2, 4)), 0.0), DomainError);
}

TEST(Model, InputWidthChecked) {
  Model m = Model::init(0, tiny_dims());
  Tape tape;
  EXPECT_THROW(m.forward_features(tape, tape.constant(random_batch(1, 2, 7))), ShapeError);
}

// Backward through Model's own parameter leaves against central differences.
TEST(Model, ParameterGradientsMatchFiniteDifferences) {
  Model m = Model::init(3, tiny_dims());
  // Positive biases keep every pre-activation away from the ReLU kink.
  for (Tensor* b : {&m.params().b1, &m.params().b2})
    for (double& v : b->storage()) v = 0.4;
  const Tensor x = random_batch(8, 3, 6);
  const Tensor target = random_batch(9, 3, 4);
  const Tensor zt = random_batch(10, 3, 3);
  const auto loss = [&](Tape& tape) {
    Var h = m.forward_features(tape, tape.constant(x));
    return tape.add(tape.sum(tape.mul(m.log_classify(tape, h, 0.5), tape.constant(target))),
                    tape.sum(tape.mul(m.project(tape, h), tape.constant(zt))));
  };
  m.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  const double h = 1e-5;
  for (Tensor* p : m.params().all()) {
    const std::vector<double> analytic = *p->grad();
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double keep = (*p)[i];
      (*p)[i] = keep + h;
      Tape tp;
      const double up = loss(tp).value().item();
      (*p)[i] = keep - h;
      Tape tm;
      const double down = loss(tm).value().item();
      (*p)[i] = keep;
      EXPECT_LT(relative_error(analytic[i], (up - down) / (2.0 * h)), 1e-4);
    }
  }
}

// The taped forward equals the layer formulas composed by hand.
TEST(Model, ForwardMatchesManualGraph) {
  Model m = Model::init(4, tiny_dims());
  const Tensor x = random_batch(11, 2, 6);
  Tape tape;
  const Tensor h = m.forward_features(tape, tape.constant(x)).value();
  const auto& p = m.params();
  Tape t2;
  Var a = t2.relu(t2.add_row(t2.matmul(t2.constant(x), t2.constant(p.w1)), t2.constant(p.b1)));
  a = t2.relu(t2.add_row(t2.matmul(a, t2.constant(p.w2)), t2.constant(p.b2)));
  const Tensor h2 = t2.add_row(t2.matmul(a, t2.constant(p.w3)), t2.constant(p.b3)).value();
  EXPECT_EQ(h, h2);
}

TEST(Model, BackwardFillsEveryParameterGrad) {
  Model m = Model::init(4, tiny_dims());
  for (Tensor* b : {&m.params().b1, &m.params().b2})
    for (double& v : b->storage()) v = 0.4;
  Tape tape;
  Var h = m.forward_features(tape, tape.constant(random_batch(12, 3, 6)));
  Var loss = tape.add(tape.sum(m.project(tape, h)), tape.sum(m.log_classify(tape, h, 0.1)));
  tape.backward(loss);
  for (const Tensor* t : m.params().all()) {
    ASSERT_TRUE(t->grad().has_value());
    double s = 0.0;
    for (double g : *t->grad()) s += std::abs(g);
    EXPECT_GT(s, 0.0);
  }
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const Model m = Model::init(12, tiny_dims());
  const auto dir = std::filesystem::temp_directory_path() / "cleargcd_test_ckpt";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, m, {{"note", "x"}});
  const LoadedCheckpoint ck = load_checkpoint(dir);
  EXPECT_EQ(ck.meta["note"], "x");
  EXPECT_EQ(ck.model.dims().num_classes, 4u);
  const auto a = m.params().all(), b = ck.model.params().all();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  EXPECT_EQ(std::filesystem::file_size(dir / "params.bin") % 8, 0u);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptionDetected) {
  const auto dir = std::filesystem::temp_directory_path() / "cleargcd_test_ckpt_bad";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, Model::init(1, tiny_dims()), {});
  std::filesystem::resize_file(dir / "params.bin", 64);
  EXPECT_THROW(load_checkpoint(dir), std::runtime_error);
  std::ofstream(dir / "meta.json") << "{ not json";
  EXPECT_THROW(load_checkpoint(dir), std::runtime_error);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_checkpoint(dir), std::runtime_error);
}
