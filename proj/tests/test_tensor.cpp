#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cleargcd/gradcheck.hpp"
#include "cleargcd/tensor.hpp"

using namespace cleargcd;

namespace {

Tensor random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t({r, c});
  for (double& v : t.data()) v = u(rng);
  return t;
}

#define EXPECT_GRAD_OK(f, x)                                                      \
  do {                                                                            \
    const auto r_ = grad_check(f, x);                                             \
    EXPECT_TRUE(r_.passed()) << #f << ": max rel error " << r_.max_rel_error;    \
  } while (0)

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5, 0.0)), ShapeError);
  Tensor t({2, 3}, std::vector<double>(6, 1.0));
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(Tensor, GradBufferMatchesShape) {
  Tensor t({3, 2}, 0.5);
  t.set_requires_grad(true);
  t.grad_buffer();
  ASSERT_TRUE(t.grad().has_value());
  EXPECT_EQ(t.grad()->size(), t.numel());
}

TEST(Tape, MatmulIdentityIsNoOp) {
  std::mt19937_64 rng(1);
  Tape tape;
  const Tensor a = random_matrix(rng, 3, 4);
  Var y = tape.matmul(tape.constant(Tensor::identity(3)), tape.constant(a));
  EXPECT_EQ(y.value(), a);
}

TEST(Tape, SoftmaxHandValue) {
  Tape tape;
  Var p = tape.softmax_rows(tape.constant(Tensor::matrix(1, 2, {0.0, std::log(3.0)})), 1.0);
  EXPECT_NEAR(p.value()(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(p.value()(0, 1), 0.75, 1e-12);
}

TEST(Tape, L2NormalizeHandValue) {
  Tape tape;
  Var n = tape.l2_normalize_rows(tape.constant(Tensor::matrix(1, 2, {3.0, 4.0})));
  EXPECT_NEAR(n.value()(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(n.value()(0, 1), 0.8, 1e-15);
}

TEST(Tape, L2NormalizeZeroRowStaysFinite) {
  Tape tape;
  Var n = tape.l2_normalize_rows(tape.constant(Tensor({1, 3}, 0.0)));
  EXPECT_TRUE(n.value().all_finite());
}

TEST(Tape, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}, 1.0));
  Var b = tape.constant(Tensor({3, 2}, 1.0));
  try {
    tape.add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("3x2"), std::string::npos) << msg;
  }
}

TEST(Tape, DomainErrors) {
  Tape tape;
  EXPECT_THROW(tape.log(tape.constant(Tensor::matrix(1, 2, {1.0, 0.0}))), DomainError);
  EXPECT_THROW(tape.log(tape.constant(Tensor::matrix(1, 1, {-2.0}))), DomainError);
  EXPECT_THROW(tape.div(tape.constant(Tensor::scalar(1.0)), tape.constant(Tensor::scalar(0.0))), DomainError);
  EXPECT_THROW(tape.softmax_rows(tape.constant(Tensor({1, 3}, 0.0)), 0.0), DomainError);
}

TEST(Backward, SquareGivesTwoX) {
  Tensor x = Tensor::matrix(1, 2, {1.0, 2.0});
  x.set_requires_grad(true);
  Tape tape;
  Var v = tape.param(x);
  tape.backward(tape.sum(tape.mul(v, v)));
  ASSERT_TRUE(x.grad().has_value());
  EXPECT_DOUBLE_EQ((*x.grad())[0], 2.0);
  EXPECT_DOUBLE_EQ((*x.grad())[1], 4.0);
}

TEST(Backward, LogExpChainIsOnes) {
  Tensor x = Tensor::matrix(2, 2, {0.3, -1.0, 2.0, 0.0});
  x.set_requires_grad(true);
  Tape tape;
  tape.backward(tape.sum(tape.log(tape.exp(tape.param(x)))));
  for (double g : *x.grad()) EXPECT_NEAR(g, 1.0, 1e-12);
}

TEST(Backward, NonScalarLossRejected) {
  Tape tape;
  Var v = tape.constant(Tensor({2, 2}, 1.0));
  EXPECT_THROW(tape.backward(v), ShapeError);
}

TEST(Backward, UnreachableLeafHasZeroGrad) {
  Tensor used = Tensor::matrix(1, 2, {1.0, 2.0});
  Tensor unused = Tensor::matrix(1, 2, {3.0, 4.0});
  used.set_requires_grad(true);
  unused.set_requires_grad(true);
  Tape tape;
  Var a = tape.param(used);
  tape.param(unused);
  tape.backward(tape.sum(a));
  unused.grad_buffer();
  for (double g : *unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, GradientsAccumulateAcrossUses) {
  Tensor x = Tensor::matrix(1, 1, {3.0});
  x.set_requires_grad(true);
  Tape tape;
  Var a = tape.param(x);
  Var b = tape.param(x);
  tape.backward(tape.sum(tape.add(tape.mul(a, a), b)));
  EXPECT_DOUBLE_EQ((*x.grad())[0], 7.0);
}

TEST(Backward, StopGradientBlocksFlow) {
  Tensor x = Tensor::matrix(1, 2, {1.0, 2.0});
  x.set_requires_grad(true);
  Tape tape;
  Var v = tape.param(x);
  tape.backward(tape.sum(tape.mul(v, tape.stop_gradient(v))));
  EXPECT_DOUBLE_EQ((*x.grad())[0], 1.0);
  EXPECT_DOUBLE_EQ((*x.grad())[1], 2.0);
}

// Every primitive's backward rule against central differences.
TEST(Primitives, FiniteDifferences) {
  std::mt19937_64 rng(11);
  const Tensor w = random_matrix(rng, 4, 3);
  const Tensor row = random_matrix(rng, 1, 4);
  const Tensor other = random_matrix(rng, 3, 4, 0.5, 1.5);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_matrix(rng, 3, 4);
    const Tensor xpos = random_matrix(rng, 3, 4, 0.2, 2.0);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.matmul(v, t.constant(w))); }, x);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.mul(t.matmul(t.transpose(v), v), t.matmul(t.transpose(v), v))); }, x);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.mul(t.add(v, v), t.sub(v, t.constant(other)))); }, x);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.div(t.constant(other), t.add_row(v, t.constant(row)) + t.constant(Tensor({3, 4}, 5.0)))); }, x);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.div(v, t.constant(other))); }, x);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.mean(t.exp(v)); }, x);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.log(v)); }, xpos);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.scale(t.neg(v), 2.5)); }, x);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.mul(t.sigmoid(v), v)); }, x);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.mul(t.sum_rows(v), t.sum_rows(v))); }, x);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.mul(t.gather_rows(v, {2, 0, 2}), t.gather_rows(v, {1, 1, 0}))); }, x);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.exp(t.concat_rows({v, t.scale(v, 0.5)}))); }, x);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.mul(t.l2_normalize_rows(v), t.constant(other))); }, xpos);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.mul(t.softmax_rows(v, 0.5), t.constant(other))); }, x);
    EXPECT_GRAD_OK([&](Tape& t, Var v) { return t.sum(t.mul(t.log_softmax_rows(v, 0.7), t.constant(other))); }, x);
  }
}

TEST(Primitives, ReluAwayFromKink) {
  const Tensor x = Tensor::matrix(2, 2, {0.5, -0.4, 1.2, -2.0});
  EXPECT_GRAD_OK([](Tape& t, Var v) { return t.sum(t.mul(t.relu(v), v)); }, x);
}

TEST(Primitives, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(5);
  Tape tape;
  Var p = tape.softmax_rows(tape.constant(random_matrix(rng, 6, 5, -30.0, 30.0)), 0.05);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (double v : p.value().row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Primitives, SigmoidStableAtExtremes) {
  Tape tape;
  Var s = tape.sigmoid(tape.constant(Tensor::matrix(1, 2, {-800.0, 800.0})));
  EXPECT_TRUE(s.value().all_finite());
  EXPECT_NEAR(s.value()(0, 0), 0.0, 1e-300);
  EXPECT_NEAR(s.value()(0, 1), 1.0, 1e-15);
}

TEST(Tape, NodesAreTopologicallyOrdered) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 2}, 1.0));
  Var b = tape.exp(a);
  Var c = tape.add(a, b);
  EXPECT_LT(a.id, b.id);
  EXPECT_LT(b.id, c.id);
}
