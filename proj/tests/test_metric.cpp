#include "sinkalign/metric.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sinkalign;
using sinkalign::testing::fd_gradient;
using sinkalign::testing::random_matrix;
using sinkalign::testing::random_unit;
using sinkalign::testing::relative_error;

TEST(SqrtCosDist, OrthogonalUnitVectors) {
  EXPECT_NEAR(sqrt_cos_dist(Vector{{1.0, 0.0}}, Vector{{0.0, 1.0}}), std::sqrt(2.0), 1e-15);
}

TEST(SqrtCosDist, IdenticalVectorsAreAtZero) {
  const Vector a{{0.3, -2.0, 7.5}};
  EXPECT_EQ(sqrt_cos_dist(a, a), 0.0);
  EXPECT_NEAR(sqrt_cos_dist(a, 4.0 * a), 0.0, 1e-7);
}

TEST(SqrtCosDist, FortyFiveDegrees) {
  const double h = std::sqrt(2.0) / 2.0;
  // sqrt(2 - sqrt(2))
  EXPECT_NEAR(sqrt_cos_dist(Vector{{1.0, 0.0}}, Vector{{h, h}}), 0.7653668647301796, 1e-12);
}

TEST(SqrtCosDist, DegenerateInput) {
  EXPECT_THROW(sqrt_cos_dist(Vector{{0.0, 0.0}}, Vector{{1.0, 0.0}}), DegenerateVectorError);
}

TEST(SqrtCosDist, ScaleInvariant) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    const Vector a = random_unit(6, rng);
    const Vector b = random_unit(6, rng);
    EXPECT_NEAR(sqrt_cos_dist(a, b), sqrt_cos_dist(3.7 * a, 0.02 * b), 1e-12);
  }
}

TEST(SqrtCosDist, MetricAxiomsOnRandomTriples) {
  std::mt19937_64 rng(20240601);
  for (const Index d : {2, 50}) {
    for (int t = 0; t < 10000; ++t) {
      const Vector a = random_unit(d, rng);
      const Vector b = random_unit(d, rng);
      const Vector c = random_unit(d, rng);
      const double ab = sqrt_cos_dist(a, b);
      const double ba = sqrt_cos_dist(b, a);
      const double bc = sqrt_cos_dist(b, c);
      const double ac = sqrt_cos_dist(a, c);
      ASSERT_GE(ab, 0.0);
      ASSERT_LE(ab, 2.0);
      ASSERT_NEAR(ab, ba, 1e-12);
      ASSERT_LE(ac, ab + bc + 1e-9);
    }
  }
}

TEST(SqrtCosDist, EqualsEuclideanBetweenNormalizedInputs) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 1000; ++t) {
    const Matrix ab = random_matrix(2, 9, rng, -3.0, 3.0);
    const Vector a = ab.row(0).transpose();
    const Vector b = ab.row(1).transpose();
    EXPECT_NEAR(sqrt_cos_dist(a, b), (a.normalized() - b.normalized()).norm(), 1e-9);
  }
}

TEST(SqrtCosDist, PlainCosineDistanceBreaksTriangleInequality) {
  const double h = std::sqrt(2.0) / 2.0;
  const Vector a{{1.0, 0.0}}, b{{h, h}}, c{{0.0, 1.0}};
  const auto cos_dist = [](const Vector& p, const Vector& q) { return 1.0 - cosine(p, q); };
  EXPECT_GT(cos_dist(a, c), cos_dist(a, b) + cos_dist(b, c));
  EXPECT_LE(sqrt_cos_dist(a, c), sqrt_cos_dist(a, b) + sqrt_cos_dist(b, c));
}

TEST(PairwiseDistance, OrthonormalRows) {
  const Matrix m = pairwise_distance_matrix(Matrix::Identity(4, 4), Matrix::Identity(4, 4));
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) EXPECT_NEAR(m(i, j), i == j ? 0.0 : std::sqrt(2.0), 1e-15);
}

TEST(PairwiseDistance, MatchesScalarOperation) {
  std::mt19937_64 rng(17);
  const Matrix a = random_matrix(5, 8, rng);
  const Matrix b = random_matrix(5, 8, rng);
  const Matrix m = pairwise_distance_matrix(a, b);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j)
      EXPECT_NEAR(m(i, j), sqrt_cos_dist(a.row(i).transpose(), b.row(j).transpose()), 1e-12);
  const Matrix single = pairwise_distance_matrix(a.topRows(1), b.topRows(1));
  EXPECT_NEAR(single(0, 0), sqrt_cos_dist(a.row(0).transpose(), b.row(0).transpose()), 1e-15);
}

TEST(PairwiseDistance, DegenerateRow) {
  Matrix a = Matrix::Identity(3, 3);
  a.row(1).setZero();
  EXPECT_THROW(pairwise_distance_matrix(a, Matrix::Identity(3, 3)), DegenerateVectorError);
}

TEST(PairwiseDistanceBackward, ZeroUpstream) {
  std::mt19937_64 rng(1);
  const Matrix a = random_matrix(4, 6, rng);
  const Matrix b = random_matrix(4, 6, rng);
  const auto [da, db] = pairwise_distance_backward(a, b, Matrix::Zero(4, 4));
  EXPECT_EQ(da.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(db.cwiseAbs().maxCoeff(), 0.0);
}

TEST(PairwiseDistanceBackward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const Index rows = seed % 2 == 0 ? 4 : 8;
    const Index d = seed % 3 == 0 ? 3 : (seed % 3 == 1 ? 6 : 10);
    const Matrix a = random_matrix(rows, d, rng);
    const Matrix b = random_matrix(rows, d, rng);
    const Matrix up = random_matrix(rows, rows, rng);
    const auto [da, db] = pairwise_distance_backward(a, b, up);
    const auto loss_a = [&](const Matrix& p) { return up.cwiseProduct(pairwise_distance_matrix(p, b)).sum(); };
    const auto loss_b = [&](const Matrix& p) { return up.cwiseProduct(pairwise_distance_matrix(a, p)).sum(); };
    EXPECT_LE(relative_error(da, fd_gradient(loss_a, a, 1e-5)), 1e-5) << "seed " << seed;
    EXPECT_LE(relative_error(db, fd_gradient(loss_b, b, 1e-5)), 1e-5) << "seed " << seed;
  }
}

TEST(PairwiseDistanceBackward, InverseScalingOfGradient) {
  std::mt19937_64 rng(9);
  const Matrix a = random_matrix(5, 4, rng);
  const Matrix b = random_matrix(5, 4, rng);
  const Matrix up = random_matrix(5, 5, rng);
  EXPECT_LE((pairwise_distance_matrix(3.0 * a, b) - pairwise_distance_matrix(a, b)).cwiseAbs().maxCoeff(), 1e-12);
  const Matrix da = pairwise_distance_backward(a, b, up).first;
  const Matrix da3 = pairwise_distance_backward(3.0 * a, b, up).first;
  EXPECT_LE((da3 - da / 3.0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PairwiseDistanceBackward, ClampedNearCoincidentRows) {
  const Matrix a{{1.0, 0.0}, {0.0, 1.0}};
  const auto [da, db] = pairwise_distance_backward(a, a, Matrix::Ones(2, 2));
  EXPECT_TRUE(da.allFinite());
  EXPECT_TRUE(db.allFinite());
}
