#include "sinkalign/sinkhorn.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace sinkalign;
using sinkalign::testing::fd_gradient;
using sinkalign::testing::random_matrix;
using sinkalign::testing::relative_error;

namespace {

Vector uniform(Index n) { return Vector::Constant(n, 1.0 / static_cast<double>(n)); }

Vector random_simplex(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.2, 1.0);
  Vector w(n);
  for (Index i = 0; i < n; ++i) w[i] = dist(rng);
  return w / w.sum();
}

}  // namespace

TEST(Sinkhorn, ZeroCostGivesZeroDistance) {
  std::mt19937_64 rng(3);
  const auto res = sinkhorn_plan(Matrix::Zero(4, 4), random_simplex(4, rng), random_simplex(4, rng), {});
  EXPECT_EQ(res.distance, 0.0);
}

TEST(Sinkhorn, SymmetricTwoByTwoClosedForm) {
  const Matrix m{{0.0, 1.0}, {1.0, 0.0}};
  const double expected = std::exp(-10.0) / (1.0 + std::exp(-10.0));
  const auto res = sinkhorn_plan(m, uniform(2), uniform(2), {10.0, 20});
  EXPECT_NEAR(res.distance, expected, 1e-9);
  EXPECT_NEAR(res.distance, 4.5398e-5, 1e-9);
}

TEST(Sinkhorn, PlanFactorization) {
  std::mt19937_64 rng(8);
  const Matrix m = random_matrix(6, 6, rng, 0.0, 2.0);
  const auto res = sinkhorn_plan(m, uniform(6), uniform(6), {});
  const Matrix p = res.plan.coupling();
  EXPECT_NEAR(p.cwiseProduct(m).sum(), res.distance, 1e-12);
  EXPECT_TRUE((p.array() >= 0.0).all());
}

TEST(Sinkhorn, ConvergesToExactOptimumFromAbove) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(500 + seed);
    const Matrix m = random_matrix(6, 6, rng, 0.0, 2.0);
    const double oracle = exact_ot_uniform(m);
    const double d = sinkhorn_distance(m, uniform(6), uniform(6), {50.0, 500});
    EXPECT_GE(d, oracle - 1e-9);
    EXPECT_LE(d, oracle + 0.02);
  }
}

TEST(Sinkhorn, NonincreasingInLambda) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(900 + seed);
    const Matrix m = random_matrix(6, 6, rng, 0.0, 2.0);
    const double oracle = exact_ot_uniform(m);
    double previous = std::numeric_limits<double>::infinity();
    for (const double lambda : {5.0, 10.0, 25.0, 50.0}) {
      const double d = sinkhorn_distance(m, uniform(6), uniform(6), {lambda, 500});
      EXPECT_LE(d, previous + 1e-12) << "lambda " << lambda;
      EXPECT_GE(d, oracle - 1e-9);
      previous = d;
    }
  }
}

TEST(Sinkhorn, MarginalFeasibility) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(40 + seed);
    const Matrix m = random_matrix(10, 10, rng, 0.0, 2.0);
    const Vector r = random_simplex(10, rng);
    const Vector c = random_simplex(10, rng);
    double previous = std::numeric_limits<double>::infinity();
    for (int iters = 1; iters <= 200; ++iters) {
      const Matrix p = sinkhorn_plan(m, r, c, {10.0, iters}).plan.coupling();
      EXPECT_LE((p.colwise().sum().transpose() - c).cwiseAbs().maxCoeff(), 1e-9);
      const double row_err = (p.rowwise().sum() - r).cwiseAbs().maxCoeff();
      EXPECT_LE(row_err, previous + 1e-15) << "I=" << iters;
      previous = row_err;
    }
    EXPECT_LE(previous, 1e-6);
  }
}

TEST(Sinkhorn, TransposeSymmetry) {
  std::mt19937_64 rng(77);
  const Matrix m = random_matrix(7, 7, rng, 0.0, 2.0);
  const Vector r = random_simplex(7, rng);
  const Vector c = random_simplex(7, rng);
  const SinkhornConfig cfg{10.0, 300};
  EXPECT_NEAR(sinkhorn_distance(m, r, c, cfg), sinkhorn_distance(m.transpose(), c, r, cfg), 1e-9);
}

TEST(Sinkhorn, RectangularInputs) {
  std::mt19937_64 rng(2);
  const Matrix m = random_matrix(3, 5, rng, 0.0, 2.0);
  const auto res = sinkhorn_plan(m, uniform(3), uniform(5), {10.0, 100});
  EXPECT_NEAR(res.plan.coupling().sum(), 1.0, 1e-9);
}

TEST(Sinkhorn, KernelUnderflowIsReported) {
  const Matrix m = Matrix::Constant(3, 3, 40.0);
  EXPECT_THROW(sinkhorn_plan(m, uniform(3), uniform(3), {20.0, 20}), NumericalError);
}

TEST(Sinkhorn, NonFiniteCostIsReported) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(sinkhorn_plan(m, uniform(2), uniform(2), {}), NumericalError);
}

TEST(Sinkhorn, RejectsBadInputs) {
  EXPECT_THROW(sinkhorn_plan(Matrix::Zero(2, 2), uniform(3), uniform(2), {}), std::invalid_argument);
  EXPECT_THROW(sinkhorn_plan(Matrix::Zero(2, 2), Vector{{1.0, 0.0}}, uniform(2), {}), std::invalid_argument);
  EXPECT_THROW(sinkhorn_plan(Matrix::Zero(2, 2), uniform(2), uniform(2), {0.0, 20}), std::invalid_argument);
  EXPECT_THROW(sinkhorn_plan(Matrix::Zero(2, 2), uniform(2), uniform(2), {10.0, 0}), std::invalid_argument);
}

TEST(SinkhornBackward, ZeroUpstream) {
  std::mt19937_64 rng(4);
  const Matrix m = random_matrix(5, 5, rng, 0.0, 2.0);
  EXPECT_EQ(sinkhorn_backward(m, uniform(5), uniform(5), {}, 0.0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SinkhornBackward, SingleCell) {
  const Matrix m{{0.73}};
  const Vector one = Vector::Ones(1);
  EXPECT_NEAR(sinkhorn_distance(m, one, one, {}), 0.73, 1e-15);
  EXPECT_NEAR(sinkhorn_backward(m, one, one, {}, 2.5)(0, 0), 2.5, 1e-12);
}

TEST(SinkhornBackward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(3000 + seed);
    const Matrix m = random_matrix(5, 5, rng, 0.0, 2.0);
    const Vector r = seed % 2 == 0 ? uniform(5) : random_simplex(5, rng);
    const Vector c = seed % 2 == 0 ? uniform(5) : random_simplex(5, rng);
    const SinkhornConfig cfg{10.0, 20};
    const Matrix analytic = sinkhorn_backward(m, r, c, cfg, 1.0);
    const Matrix numeric = fd_gradient([&](const Matrix& p) { return sinkhorn_distance(p, r, c, cfg); }, m, 1e-6);
    EXPECT_LE(relative_error(analytic, numeric), 1e-4) << "seed " << seed;
  }
}

TEST(SinkhornBackward, UpstreamScalesLinearly) {
  std::mt19937_64 rng(6);
  const Matrix m = random_matrix(4, 4, rng, 0.0, 2.0);
  const Matrix g1 = sinkhorn_backward(m, uniform(4), uniform(4), {}, 1.0);
  const Matrix g3 = sinkhorn_backward(m, uniform(4), uniform(4), {}, -3.0);
  EXPECT_LE((g3 + 3.0 * g1).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SinkhornBackward, EnvelopeModeReturnsScaledCoupling) {
  std::mt19937_64 rng(10);
  const Matrix m = random_matrix(4, 4, rng, 0.0, 2.0);
  const auto res = sinkhorn_plan(m, uniform(4), uniform(4), {});
  const Matrix env = sinkhorn_backward(m, uniform(4), uniform(4), {}, 2.0, SinkhornGradient::kEnvelope);
  EXPECT_LE((env - 2.0 * res.plan.coupling()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ExactOt, SmallCases) {
  EXPECT_EQ(exact_ot_uniform(Matrix{{0.0, 1.0}, {1.0, 0.0}}), 0.0);
  EXPECT_EQ(exact_ot_uniform(Matrix{{1.0, 0.0}, {0.0, 1.0}}), 0.0);
  EXPECT_EQ(exact_ot_uniform(Matrix{{2.0, 1.0}, {1.0, 2.0}}), 1.0);
}

TEST(ExactOt, RejectsLargeOrRectangular) {
  EXPECT_THROW(exact_ot_uniform(Matrix::Zero(9, 9)), std::invalid_argument);
  EXPECT_THROW(exact_ot_uniform(Matrix::Zero(2, 3)), std::invalid_argument);
}
