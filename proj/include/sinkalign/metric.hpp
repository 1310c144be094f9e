#pragma once

// Square-root cosine distance, sqrt(2 - 2 cos(a, b)).
//
// This is the Euclidean distance between the L2-normalized inputs, hence a
// proper metric with values in [0, 2]. Plain 1 - cos is not: it fails the
// triangle inequality.

#include "sinkalign/common.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace sinkalign {

/// Below this distance the square-root derivative is evaluated at the threshold.
inline constexpr double kSqrtGradFloor = 1e-6;

inline double cosine(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < kDegenerateNorm || nb < kDegenerateNorm) throw DegenerateVectorError("cosine: near-zero input vector");
  return a.dot(b) / (na * nb);
}

inline double sqrt_cos_dist(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * cosine(a, b)));
}

namespace detail {

/// Rows scaled to unit norm; `norms` receives the original row norms.
inline Matrix normalize_rows(const Matrix& m, Vector& norms) {
  norms = m.rowwise().norm();
  if (m.rows() > 0 && norms.minCoeff() < kDegenerateNorm)
    throw DegenerateVectorError("pairwise distance: row with near-zero norm");
  return norms.cwiseInverse().asDiagonal() * m;
}

/// Gradient w.r.t. the unnormalized rows given the gradient w.r.t. the normalized ones.
inline Matrix normalize_rows_backward(const Matrix& unit, const Vector& norms, const Matrix& d_unit) {
  const Vector radial = (d_unit.cwiseProduct(unit)).rowwise().sum();
  return norms.cwiseInverse().asDiagonal() * (d_unit - radial.asDiagonal() * unit);
}

}  // namespace detail

/// M(i, j) = sqrt_cos_dist(A.row(i), B.row(j)).
inline Matrix pairwise_distance_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("pairwise_distance_matrix: column dimensions differ");
  Vector na, nb;
  const Matrix ua = detail::normalize_rows(a, na);
  const Matrix ub = detail::normalize_rows(b, nb);
  const Matrix gram = ua * ub.transpose();
  return gram.unaryExpr([](double c) { return std::sqrt(std::max(0.0, 2.0 - 2.0 * c)); });
}

/// Gradients of sum(upstream .* M) with respect to A and B.
inline std::pair<Matrix, Matrix> pairwise_distance_backward(const Matrix& a, const Matrix& b, const Matrix& upstream) {
  if (a.cols() != b.cols()) throw std::invalid_argument("pairwise_distance_backward: column dimensions differ");
  if (upstream.rows() != a.rows() || upstream.cols() != b.rows())
    throw std::invalid_argument("pairwise_distance_backward: upstream shape mismatch");
  Vector na, nb;
  const Matrix ua = detail::normalize_rows(a, na);
  const Matrix ub = detail::normalize_rows(b, nb);
  const Matrix gram = ua * ub.transpose();
  // dM/dc = -1 / sqrt(2 - 2c), floored.
  const Matrix d_gram = upstream.binaryExpr(gram, [](double up, double c) {
    const double m = std::sqrt(std::max(0.0, 2.0 - 2.0 * c));
    return -up / std::max(m, kSqrtGradFloor);
  });
  const Matrix d_ua = d_gram * ub;
  const Matrix d_ub = d_gram.transpose() * ua;
  return {detail::normalize_rows_backward(ua, na, d_ua), detail::normalize_rows_backward(ub, nb, d_ub)};
}

}  // namespace sinkalign
