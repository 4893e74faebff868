#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "pro2/optim.hpp"
#include "pro2/rng.hpp"

namespace pro2 {
namespace {

Matrix random_logits(Eigen::Index n, Eigen::Index c, double scale, SplitMix64& rng) {
  Matrix z(n, c);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = scale * rng.normal();
  return z;
}

std::vector<int> random_labels(Eigen::Index n, int classes, SplitMix64& rng) {
  std::vector<int> y;
  for (Eigen::Index i = 0; i < n; ++i) y.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
  return y;
}

// Central differences of the scalar loss; independent of the analytic gradient.
template <typename LossFn>
Matrix finite_difference(LossFn&& loss, const Matrix& z, double h) {
  Matrix g(z.rows(), z.cols());
  Matrix probe = z;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = loss(probe);
    probe.data()[i] = orig - h;
    const double down = loss(probe);
    probe.data()[i] = orig;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

double relative_error(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

TEST(BinaryLogisticLoss, ZeroLogitsGiveLn2) {
  const auto lv = binary_logistic_loss(Matrix::Zero(6, 3), std::vector<int>{0, 1, 0, 1, 1, 0});
  EXPECT_NEAR(lv.value, std::numbers::ln2, 1e-12);
}

TEST(BinaryLogisticLoss, SaturatesWithoutOverflow) {
  Matrix z(1, 1);
  z << 50.0;
  EXPECT_LT(binary_logistic_loss(z, std::vector<int>{1}).value, 1e-20);
  z << 1e4;
  const auto wrong = binary_logistic_loss(z, std::vector<int>{0});
  EXPECT_NEAR(wrong.value, 1e4, 1e-6);
  EXPECT_TRUE(wrong.gradient.allFinite());
  z << -1e4;
  EXPECT_TRUE(std::isfinite(binary_logistic_loss(z, std::vector<int>{0}).value));
}

TEST(BinaryLogisticLoss, RejectsNonBinaryLabels) {
  EXPECT_THROW(binary_logistic_loss(Matrix::Zero(2, 1), std::vector<int>{0, 2}), ValidationError);
}

TEST(BinaryLogisticLoss, GradientMatchesFiniteDifferences5x3) {
  SplitMix64 rng(11);
  const Matrix z = random_logits(5, 3, 2.0, rng);
  const auto y = random_labels(5, 2, rng);
  const auto lv = binary_logistic_loss(z, y);
  const Matrix fd = finite_difference([&](const Matrix& m) { return binary_logistic_loss(m, y).value; }, z, 1e-5);
  EXPECT_LE(relative_error(lv.gradient, fd), 1e-6);
}

TEST(SoftmaxXent, UniformLogitsGiveLnC) {
  EXPECT_NEAR(softmax_xent_loss(Matrix::Constant(3, 4, 0.7), std::vector<int>{0, 3, 2}).value, std::log(4.0), 1e-12);
}

TEST(SoftmaxXent, TwoClassesReduceToLogisticOnDifference) {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = random_logits(7, 2, 3.0, rng);
    const auto y = random_labels(7, 2, rng);
    const Matrix diff = z.col(1) - z.col(0);
    EXPECT_NEAR(softmax_xent_loss(z, y).value, binary_logistic_loss(diff, y).value, 1e-10);
  }
}

TEST(SoftmaxXent, Errors) {
  EXPECT_THROW(softmax_xent_loss(Matrix::Zero(2, 3), std::vector<int>{0, 3}), ValidationError);
  EXPECT_THROW(softmax_xent_loss(Matrix::Zero(2, 1), std::vector<int>{0, 0}), ContractError);
}

TEST(SoftmaxXent, GradientMatchesFiniteDifferences) {
  SplitMix64 rng(12);
  const Matrix z = random_logits(6, 4, 2.0, rng);
  const auto y = random_labels(6, 4, rng);
  const auto lv = softmax_xent_loss(z, y);
  const Matrix fd = finite_difference([&](const Matrix& m) { return softmax_xent_loss(m, y).value; }, z, 1e-5);
  EXPECT_LE(relative_error(lv.gradient, fd), 1e-6);
}

TEST(Losses, RandomizedFiniteDifferenceProperty) {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(12));
    const auto d = static_cast<Eigen::Index>(1 + rng.below(5));
    const double scale = rng.uniform(0.1, 8.0);
    const Matrix zb = random_logits(n, d, scale, rng);
    const auto yb = random_labels(n, 2, rng);
    const Matrix fdb = finite_difference([&](const Matrix& m) { return binary_logistic_loss(m, yb).value; }, zb, 1e-5);
    ASSERT_LE(relative_error(binary_logistic_loss(zb, yb).gradient, fdb), 1e-4) << "trial " << trial;

    const int classes = static_cast<int>(2 + rng.below(5));
    const Matrix zs = random_logits(n, classes, scale, rng);
    const auto ys = random_labels(n, classes, rng);
    const Matrix fds = finite_difference([&](const Matrix& m) { return softmax_xent_loss(m, ys).value; }, zs, 1e-5);
    ASSERT_LE(relative_error(softmax_xent_loss(zs, ys).gradient, fds), 1e-4) << "trial " << trial;
  }
}

TEST(Losses, InvariantToSampleOrder) {
  SplitMix64 rng(4);
  const Matrix z = random_logits(8, 3, 1.5, rng);
  const auto y = random_labels(8, 3, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(8);
  perm.indices() << 3, 0, 7, 1, 6, 2, 5, 4;
  const Matrix zp = perm * z;
  std::vector<int> yp(8);
  for (int i = 0; i < 8; ++i) yp[static_cast<std::size_t>(perm.indices()(i))] = y[static_cast<std::size_t>(i)];
  const auto a = softmax_xent_loss(z, y);
  const auto b = softmax_xent_loss(zp, yp);
  EXPECT_NEAR(a.value, b.value, 1e-14);
  EXPECT_LE((perm * a.gradient - b.gradient).norm(), 1e-15);
}

TEST(AdamW, FirstStepFromZero) {
  const auto state = OptimState::zeros(1, 1, AdamHyper{0.01, 0.0});
  const auto [theta, next] = adamw_step(Matrix::Zero(1, 1), Matrix::Ones(1, 1), state);
  // m = 0.1, v = 0.001; bias-corrected both to 1: step = lr * 1 / (1 + eps).
  EXPECT_NEAR(theta(0, 0), -0.01, 1e-6);
  EXPECT_EQ(next.step_count, 1);
  EXPECT_EQ(state.step_count, 0);
}

TEST(AdamW, ZeroGradientWithoutDecayIsIdentity) {
  Matrix p(2, 2);
  p << 1, -2, 3, 4;
  const auto [q, s] = adamw_step(p, Matrix::Zero(2, 2), OptimState::zeros(2, 2, AdamHyper{0.1, 0.0}));
  EXPECT_EQ(q, p);
}

TEST(AdamW, ZeroGradientIsPureDecay) {
  Matrix p(1, 3);
  p << 1, -2, 5;
  const double lr = 0.05;
  const auto [q, s] = adamw_step(p, Matrix::Zero(1, 3), OptimState::zeros(1, 3, AdamHyper{lr, 0.01}));
  EXPECT_LE((q - p * (1 - lr * 0.01)).norm(), 1e-15);
}

TEST(AdamW, ShapeMismatchIsContractError) {
  EXPECT_THROW(adamw_step(Matrix::Zero(2, 2), Matrix::Zero(2, 1), OptimState::zeros(2, 2, {})), ContractError);
  EXPECT_THROW(adamw_step(Matrix::Zero(2, 2), Matrix::Zero(2, 2), OptimState::zeros(3, 2, {})), ContractError);
}

TEST(AdamW, PureFunctionOfInputs) {
  SplitMix64 rng(8);
  Matrix p = random_logits(3, 2, 1.0, rng), g = random_logits(3, 2, 1.0, rng);
  auto s = OptimState::zeros(3, 2, {});
  s.first_moment = random_logits(3, 2, 0.1, rng);
  s.second_moment = random_logits(3, 2, 0.1, rng).cwiseAbs();
  s.step_count = 4;
  const auto a = adamw_step(p, g, s);
  const auto b = adamw_step(p, g, s);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second.first_moment, b.second.first_moment);
  EXPECT_EQ(a.second.step_count, 5);
}

}  // namespace
}  // namespace pro2
