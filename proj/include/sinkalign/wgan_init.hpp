#pragma once

// Adversarial pretraining of G and F against gradient-penalty critics.
//
// Each direction has its own critic: C_Y scores target-space vectors (real Y
// versus G(X)), C_X scores source-space vectors (real X versus F(Y)). Critics
// maximize score(real) - score(mapped) - penalty; the maps minimize
// -score(mapped), plus beta times the back-translation loss.

#include "sinkalign/common.hpp"
#include "sinkalign/embed_io.hpp"
#include "sinkalign/transfer.hpp"

#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <utility>
#include <vector>

namespace sinkalign {

inline constexpr double kLeakySlope = 0.01;

/// Two-layer scorer: s(x) = w2' leaky(W1' x + b1) + b2.
struct Critic {
  Matrix w1;  ///< d x h
  Vector b1;  ///< h
  Vector w2;  ///< h
  double b2 = 0.0;

  Index dim() const noexcept { return w1.rows(); }
  Index hidden() const noexcept { return w1.cols(); }

  static Critic zeros(Index d, Index h) { return {Matrix::Zero(d, h), Vector::Zero(h), Vector::Zero(h), 0.0}; }

  /// He-style Gaussian initialization, zero biases.
  static Critic random(Index d, Index h, Rng& rng) {
    Critic c = zeros(d, h);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double s1 = std::sqrt(2.0 / static_cast<double>(d));
    const double s2 = std::sqrt(1.0 / static_cast<double>(h));
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < h; ++j) c.w1(i, j) = s1 * normal(rng);
    for (Index j = 0; j < h; ++j) c.w2[j] = s2 * normal(rng);
    return c;
  }

  bool finite() const { return w1.allFinite() && b1.allFinite() && w2.allFinite() && std::isfinite(b2); }
};

/// Parameter-shaped gradient of a critic.
struct CriticGrad {
  Matrix w1;
  Vector b1;
  Vector w2;
  double b2 = 0.0;

  static CriticGrad zeros_like(const Critic& c) {
    return {Matrix::Zero(c.w1.rows(), c.w1.cols()), Vector::Zero(c.b1.size()), Vector::Zero(c.w2.size()), 0.0};
  }
};

namespace detail {

inline Matrix critic_preactivation(const Critic& c, const Matrix& v) {
  if (v.cols() != c.dim()) throw std::invalid_argument("critic: input dimension mismatch");
  return (v * c.w1).rowwise() + c.b1.transpose();
}

inline Matrix leaky_slope(const Matrix& z) {
  return z.unaryExpr([](double t) { return t > 0.0 ? 1.0 : kLeakySlope; });
}

inline Matrix leaky(const Matrix& z) {
  return z.unaryExpr([](double t) { return t > 0.0 ? t : kLeakySlope * t; });
}

}  // namespace detail

inline Vector critic_score(const Critic& c, const Matrix& v) {
  const Matrix h = detail::leaky(detail::critic_preactivation(c, v));
  return (h * c.w2).array() + c.b2;
}

/// Gradient of each row's score with respect to that row (b x d).
inline Matrix critic_input_gradient(const Critic& c, const Matrix& v) {
  const Matrix slope = detail::leaky_slope(detail::critic_preactivation(c, v));
  return (slope * c.w2.asDiagonal()) * c.w1.transpose();
}

/// Accumulates d(sum_i weights_i * s(v_i)) / d(params) into `grad` and
/// returns sum_i weights_i * s(v_i).
inline double critic_score_backward(const Critic& c, const Matrix& v, const Vector& weights, CriticGrad& grad) {
  const Matrix z = detail::critic_preactivation(c, v);
  const Matrix h = detail::leaky(z);
  const Vector scores = (h * c.w2).array() + c.b2;
  grad.w2.noalias() += h.transpose() * weights;
  grad.b2 += weights.sum();
  const Matrix dz = (weights * c.w2.transpose()).cwiseProduct(detail::leaky_slope(z));
  grad.w1.noalias() += v.transpose() * dz;
  grad.b1.noalias() += dz.colwise().sum().transpose();
  return scores.dot(weights);
}

/// Per-row random points on the segments between real and fake rows.
inline Matrix interpolate(const Matrix& real, const Matrix& fake, Rng& rng) {
  if (real.rows() != fake.rows() || real.cols() != fake.cols())
    throw std::invalid_argument("gradient_penalty: batch shapes differ");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix out(real.rows(), real.cols());
  for (Index i = 0; i < real.rows(); ++i) {
    const double a = unit(rng);
    out.row(i) = a * real.row(i) + (1.0 - a) * fake.row(i);
  }
  return out;
}

/// gp * mean_i (|grad_x s(x_i)| - 1)^2 at the given points. When `grad` is
/// given, the penalty's parameter gradient is accumulated into it (the
/// slopes of the leaky rectifier are locally constant, so biases get none).
inline double gradient_penalty_at(const Critic& c, const Matrix& points, double gp, CriticGrad* grad = nullptr) {
  const Matrix slope = detail::leaky_slope(detail::critic_preactivation(c, points));
  const Matrix s = slope * c.w2.asDiagonal();
  const Matrix gx = s * c.w1.transpose();
  const Vector norms = gx.rowwise().norm();
  const double scale = gp / static_cast<double>(points.rows());
  const double penalty = scale * (norms.array() - 1.0).square().sum();
  if (grad != nullptr) {
    Vector coef(norms.size());
    for (Index i = 0; i < norms.size(); ++i)
      coef[i] = norms[i] > 0.0 ? 2.0 * scale * (norms[i] - 1.0) / norms[i] : 0.0;
    const Matrix d_gx = coef.asDiagonal() * gx;
    grad->w1.noalias() += d_gx.transpose() * s;
    grad->w2.noalias() += ((d_gx * c.w1).cwiseProduct(slope)).colwise().sum().transpose();
  }
  return penalty;
}

inline double gradient_penalty(const Critic& c, const Matrix& real, const Matrix& fake, Rng& rng, double gp = 10.0) {
  return gradient_penalty_at(c, interpolate(real, fake, rng), gp);
}

/// Text checkpoint: w1, b1, w2, b2 as consecutive shape-headed matrices.
inline void write_critic(const Critic& c, std::ostream& out) {
  write_matrix(c.w1, out);
  write_matrix(c.b1.transpose(), out);
  write_matrix(c.w2.transpose(), out);
  write_matrix(Matrix::Constant(1, 1, c.b2), out);
}

inline Critic read_critic(std::istream& in) {
  std::size_t line_no = 0;
  Critic c;
  c.w1 = read_matrix(in, line_no);
  const Matrix b1 = read_matrix(in, line_no);
  const Matrix w2 = read_matrix(in, line_no);
  const Matrix b2 = read_matrix(in, line_no);
  if (b1.rows() != 1 || b1.cols() != c.hidden() || w2.rows() != 1 || w2.cols() != c.hidden() || b2.size() != 1)
    throw ParseError(ParseError::Kind::kDimension, line_no, "critic tensors have inconsistent shapes");
  c.b1 = b1.row(0).transpose();
  c.w2 = w2.row(0).transpose();
  c.b2 = b2(0, 0);
  return c;
}

struct WganConfig {
  std::size_t steps = 3000;
  int critic_steps = 5;
  double gp = 10.0;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  double adam_eps = 1e-8;
  Index batch_size = 512;
  Index hidden = 500;
  std::uint64_t seed = 0;
  /// Weight of the back-translation term in the map updates; zero disables it.
  double beta = 0.1;
  std::optional<Index> train_vocab = 10000;

  void validate() const {
    if (critic_steps < 1) throw std::invalid_argument("WganConfig: critic_steps must be >= 1");
    if (!(gp > 0.0)) throw std::invalid_argument("WganConfig: gp must be > 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("WganConfig: learning_rate must be > 0");
    if (batch_size < 1 || hidden < 1) throw std::invalid_argument("WganConfig: batch_size and hidden must be >= 1");
    if (!(beta >= 0.0)) throw std::invalid_argument("WganConfig: beta must be >= 0");
    if (train_vocab && *train_vocab < 1) throw std::invalid_argument("WganConfig: train_vocab must be positive");
  }
};

/// Per generator step: critic score gaps (Wasserstein estimates) for each
/// direction, measured on the last critic batch, and the map loss.
struct WganRecord {
  double gap_y = 0.0;  ///< C_Y: mean s(Y) - mean s(G(X))
  double gap_x = 0.0;  ///< C_X: mean s(X) - mean s(F(Y))
  double map_loss = 0.0;
};

struct WganReport {
  LinearMap g;
  LinearMap f;
  Critic critic_y;
  Critic critic_x;
  std::vector<WganRecord> records;

  /// Moving average of gap_y + gap_x over `window` steps; empty when too few steps.
  std::vector<double> smoothed_gap(std::size_t window) const {
    std::vector<double> out;
    if (records.size() < window || window == 0) return out;
    double sum = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      sum += records[i].gap_y + records[i].gap_x;
      if (i >= window) sum -= records[i - window].gap_y + records[i - window].gap_x;
      if (i + 1 >= window) out.push_back(sum / static_cast<double>(window));
    }
    return out;
  }
};

namespace detail {

class CriticAdam {
 public:
  CriticAdam(const Critic& c, const WganConfig& cfg)
      : w1_(c.w1.rows(), c.w1.cols(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
        b1_(c.b1.size(), 1, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
        w2_(c.w2.size(), 1, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
        b2_(1, 1, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) {}

  void step(Critic& c, const CriticGrad& g) {
    w1_.step(c.w1, g.w1);
    step_vector(b1_, c.b1, g.b1);
    step_vector(w2_, c.w2, g.w2);
    Matrix b2 = Matrix::Constant(1, 1, c.b2);
    b2_.step(b2, Matrix::Constant(1, 1, g.b2));
    c.b2 = b2(0, 0);
  }

 private:
  static void step_vector(Adam& opt, Vector& param, const Vector& grad) {
    Matrix p = param;
    opt.step(p, grad);
    param = p.col(0);
  }

  Adam w1_, b1_, w2_, b2_;
};

/// One critic update on (real, fake); returns the score gap before the update.
inline double critic_update(Critic& c, CriticAdam& opt, const Matrix& real, const Matrix& fake, double gp, Rng& rng) {
  const auto b = static_cast<double>(real.rows());
  CriticGrad grad = CriticGrad::zeros_like(c);
  // minimize -(mean s(real) - mean s(fake)) + penalty
  const double neg_real = critic_score_backward(c, real, Vector::Constant(real.rows(), -1.0 / b), grad);
  const double fake_mean = critic_score_backward(c, fake, Vector::Constant(fake.rows(), 1.0 / b), grad);
  gradient_penalty_at(c, interpolate(real, fake, rng), gp, &grad);
  opt.step(c, grad);
  return -neg_real - fake_mean;
}

}  // namespace detail

/// Called after each step with the step index and the updated maps.
using StepObserver = std::function<void(std::size_t, const LinearMap&, const LinearMap&)>;

/// Adversarial initialization of (G, F), starting from identity maps.
/// Deterministic given cfg.seed.
inline WganReport pretrain(const EmbeddingSet& x, const EmbeddingSet& y, const WganConfig& cfg,
                           const StepObserver& observer = {}) {
  cfg.validate();
  if (!x.normalized() || !y.normalized()) throw std::invalid_argument("pretrain: embeddings must be L2-normalized");
  if (x.dim() != y.dim()) throw std::invalid_argument("pretrain: embedding dimensions differ");
  const Index d = x.dim();

  WganReport report;
  report.g = LinearMap::identity(d);
  report.f = LinearMap::identity(d);
  if (cfg.steps == 0) return report;

  const EmbeddingSet xs = cfg.train_vocab ? x.head(*cfg.train_vocab) : x;
  const EmbeddingSet ys = cfg.train_vocab ? y.head(*cfg.train_vocab) : y;
  BatchSampler sample_x(xs), sample_y(ys);
  Rng rng(cfg.seed);

  report.critic_y = Critic::random(d, cfg.hidden, rng);
  report.critic_x = Critic::random(d, cfg.hidden, rng);
  detail::CriticAdam opt_cy(report.critic_y, cfg), opt_cx(report.critic_x, cfg);
  Matrix wg = report.g.weight();
  Matrix wf = report.f.weight();
  Adam opt_g(d, d, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Adam opt_f(d, d, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  const auto b = static_cast<double>(cfg.batch_size);
  report.records.reserve(cfg.steps);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    WganRecord rec;
    for (int k = 0; k < cfg.critic_steps; ++k) {
      const Matrix xb = gather_rows(xs.vectors(), sample_x(cfg.batch_size, rng));
      const Matrix yb = gather_rows(ys.vectors(), sample_y(cfg.batch_size, rng));
      const Matrix gx = xb * wg.transpose();
      const Matrix fy = yb * wf.transpose();
      rec.gap_y = detail::critic_update(report.critic_y, opt_cy, yb, gx, cfg.gp, rng);
      rec.gap_x = detail::critic_update(report.critic_x, opt_cx, xb, fy, cfg.gp, rng);
    }

    const Matrix xb = gather_rows(xs.vectors(), sample_x(cfg.batch_size, rng));
    const Matrix yb = gather_rows(ys.vectors(), sample_y(cfg.batch_size, rng));
    const Matrix gx = xb * wg.transpose();
    const Matrix fy = yb * wf.transpose();
    rec.map_loss = -critic_score(report.critic_y, gx).mean() - critic_score(report.critic_x, fy).mean();
    Matrix d_g = -(critic_input_gradient(report.critic_y, gx).transpose() * xb) / b;
    Matrix d_f = -(critic_input_gradient(report.critic_x, fy).transpose() * yb) / b;
    if (cfg.beta > 0.0)
      rec.map_loss += cfg.beta * ::sinkalign::detail::back_translation_accumulate(xb, yb, gx, fy, wg, wf, cfg.beta,
                                                                                   d_g, d_f);
    if (!std::isfinite(rec.map_loss) || !std::isfinite(rec.gap_x) || !std::isfinite(rec.gap_y) ||
        !d_g.allFinite() || !d_f.allFinite() || !report.critic_x.finite() || !report.critic_y.finite())
      throw DivergenceError(step, "non-finite adversarial loss or parameters");
    opt_g.step(wg, d_g);
    opt_f.step(wf, d_f);
    report.records.push_back(rec);
    if (observer) observer(step, LinearMap(wg), LinearMap(wf));
  }
  report.g = LinearMap(wg);
  report.f = LinearMap(wf);
  return report;
}

}  // namespace sinkalign
