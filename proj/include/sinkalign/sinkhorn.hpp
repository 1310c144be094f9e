#pragma once

// Entropic optimal transport by matrix scaling, with the exact reverse-mode
// derivative of the fixed-iteration computation.
//
//   K = exp(-lambda * M)
//   v = 1/m
//   repeat I times: u = r ./ (K v);  v = c ./ (K' u)
//   distance = u' ((K .* M) v)

#include "sinkalign/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

namespace sinkalign {

struct SinkhornConfig {
  double lambda = 10.0;  ///< entropic regularization multiplier
  int iterations = 20;

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("SinkhornConfig: lambda must be > 0");
    if (iterations < 1) throw std::invalid_argument("SinkhornConfig: iterations must be >= 1");
  }
};

/// Coupling P = diag(u) K diag(v).
struct TransportPlan {
  Matrix kernel;
  Vector u;
  Vector v;

  Matrix coupling() const { return u.asDiagonal() * kernel * v.asDiagonal(); }
};

struct SinkhornResult {
  TransportPlan plan;
  double distance = 0.0;
};

inline constexpr double kScalingFloor = 1e-300;

namespace detail {

inline void check_inputs(const Matrix& cost, const Vector& r, const Vector& c, const SinkhornConfig& cfg) {
  cfg.validate();
  if (cost.rows() != r.size() || cost.cols() != c.size())
    throw std::invalid_argument("sinkhorn: marginal lengths do not match the cost matrix");
  if (cost.size() == 0) throw std::invalid_argument("sinkhorn: empty cost matrix");
  if (!cost.allFinite()) throw NumericalError("sinkhorn: cost matrix has non-finite entries");
  if ((r.array() <= 0.0).any() || (c.array() <= 0.0).any())
    throw std::invalid_argument("sinkhorn: marginals must be strictly positive");
}

inline Matrix gibbs_kernel(const Matrix& cost, double lambda) {
  Matrix k = (-lambda * cost.array()).exp().matrix();
  if (k.rowwise().sum().minCoeff() < kScalingFloor || k.colwise().sum().minCoeff() < kScalingFloor)
    throw NumericalError("sinkhorn: kernel underflow (lambda * max cost too large for direct-domain scaling)");
  return k;
}

/// a ./ denom, refusing denominators below the floor.
inline Vector guarded_divide(const Vector& a, const Vector& denom) {
  if (!denom.allFinite() || denom.minCoeff() < kScalingFloor)
    throw NumericalError("sinkhorn: scaling denominator underflow or non-finite");
  return a.cwiseQuotient(denom);
}

/// Scaling iterates: us[t], vs[t] after iteration t+1; vs has the initial v at index 0.
struct Trace {
  Matrix kernel;
  std::vector<Vector> us;
  std::vector<Vector> vs;
};

inline Trace run_scaling(const Matrix& cost, const Vector& r, const Vector& c, const SinkhornConfig& cfg) {
  check_inputs(cost, r, c, cfg);
  Trace t;
  t.kernel = gibbs_kernel(cost, cfg.lambda);
  const Index m = cost.cols();
  t.vs.reserve(static_cast<std::size_t>(cfg.iterations) + 1);
  t.us.reserve(static_cast<std::size_t>(cfg.iterations));
  t.vs.push_back(Vector::Constant(m, 1.0 / static_cast<double>(m)));
  for (int it = 0; it < cfg.iterations; ++it) {
    t.us.push_back(guarded_divide(r, t.kernel * t.vs.back()));
    t.vs.push_back(guarded_divide(c, t.kernel.transpose() * t.us.back()));
  }
  return t;
}

}  // namespace detail

inline SinkhornResult sinkhorn_plan(const Matrix& cost, const Vector& r, const Vector& c, const SinkhornConfig& cfg) {
  auto trace = detail::run_scaling(cost, r, c, cfg);
  SinkhornResult out;
  out.plan.u = std::move(trace.us.back());
  out.plan.v = std::move(trace.vs.back());
  out.distance = out.plan.u.dot(trace.kernel.cwiseProduct(cost) * out.plan.v);
  out.plan.kernel = std::move(trace.kernel);
  if (!std::isfinite(out.distance)) throw NumericalError("sinkhorn: non-finite distance");
  return out;
}

inline double sinkhorn_distance(const Matrix& cost, const Vector& r, const Vector& c, const SinkhornConfig& cfg) {
  return sinkhorn_plan(cost, r, c, cfg).distance;
}

enum class SinkhornGradient {
  kUnrolled,  ///< exact derivative of the I-iteration computation
  kEnvelope,  ///< upstream * P, treating the coupling as constant; approximate
};

/// upstream * d(distance)/d(cost), by reverse traversal of the scaling iterations.
inline Matrix sinkhorn_backward(const Matrix& cost, const Vector& r, const Vector& c, const SinkhornConfig& cfg,
                                double upstream, SinkhornGradient mode = SinkhornGradient::kUnrolled) {
  const auto trace = detail::run_scaling(cost, r, c, cfg);
  const Matrix& k = trace.kernel;
  const Vector& u_last = trace.us.back();
  const Vector& v_last = trace.vs.back();

  if (mode == SinkhornGradient::kEnvelope) return upstream * (u_last.asDiagonal() * k * v_last.asDiagonal());

  const Matrix km = k.cwiseProduct(cost);
  const Matrix outer = u_last * v_last.transpose();
  Matrix d_cost = upstream * outer.cwiseProduct(k);
  Matrix d_kernel = upstream * outer.cwiseProduct(cost);
  Vector d_u = upstream * (km * v_last);
  Vector d_v = upstream * (km.transpose() * u_last);

  for (int it = cfg.iterations - 1; it >= 0; --it) {
    const auto t = static_cast<std::size_t>(it);
    const Vector& u = trace.us[t];
    const Vector& v = trace.vs[t + 1];
    const Vector& v_prev = trace.vs[t];

    // v = c ./ s, s = K' u
    const Vector s = k.transpose() * u;
    const Vector d_s = -d_v.cwiseProduct(v).cwiseQuotient(s);
    d_u += k * d_s;
    d_kernel.noalias() += u * d_s.transpose();

    // u = r ./ q, q = K v_prev
    const Vector q = k * v_prev;
    const Vector d_q = -d_u.cwiseProduct(u).cwiseQuotient(q);
    d_v = k.transpose() * d_q;
    d_kernel.noalias() += d_q * v_prev.transpose();
    d_u.setZero();
  }
  d_cost -= cfg.lambda * d_kernel.cwiseProduct(k);
  if (!d_cost.allFinite()) throw NumericalError("sinkhorn_backward: non-finite gradient");
  return d_cost;
}

inline constexpr Index kMaxExactOtSize = 8;

/// Unregularized optimal transport with uniform equal marginals, by
/// enumerating permutations (the optimum is attained at a vertex of the
/// Birkhoff polytope). Test oracle for small instances.
inline double exact_ot_uniform(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw std::invalid_argument("exact_ot_uniform: cost matrix must be square");
  const Index n = cost.rows();
  if (n < 1) throw std::invalid_argument("exact_ot_uniform: empty cost matrix");
  if (n > kMaxExactOtSize) throw std::invalid_argument("exact_ot_uniform: size too large for exhaustive search");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

}  // namespace sinkalign
