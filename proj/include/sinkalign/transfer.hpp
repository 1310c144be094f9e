#pragma once

// Bidirectional linear maps G: X -> Y and F: Y -> X trained by minimizing
//
//   d_sh(G) + d_sh(F) + beta * d_bt(G, F)
//
// where d_sh is the Sinkhorn distance under the square-root cosine metric
// and d_bt the batch-mean back-translation loss.

#include "sinkalign/common.hpp"
#include "sinkalign/embed_io.hpp"
#include "sinkalign/metric.hpp"
#include "sinkalign/sinkhorn.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace sinkalign {

/// x -> x W'. Row vectors in, row vectors out.
class LinearMap {
 public:
  LinearMap() = default;
  explicit LinearMap(Matrix weight) : weight_(std::move(weight)) {
    if (weight_.rows() != weight_.cols()) throw std::invalid_argument("LinearMap: weight must be square");
    if (!weight_.allFinite()) throw std::invalid_argument("LinearMap: weight has non-finite entries");
  }

  static LinearMap identity(Index d) { return LinearMap(Matrix::Identity(d, d)); }

  Index dim() const noexcept { return weight_.rows(); }
  const Matrix& weight() const noexcept { return weight_; }

  bool operator==(const LinearMap& other) const { return weight_ == other.weight_; }

 private:
  Matrix weight_;
};

inline Matrix apply_map(const LinearMap& map, const Matrix& x) {
  if (x.cols() != map.dim()) throw std::invalid_argument("apply_map: dimension mismatch");
  return x * map.weight().transpose();
}

/// Checkpoint text format: "rows cols" then one line of floats per row.
inline void write_matrix(const Matrix& m, std::ostream& out) {
  out << m.rows() << ' ' << m.cols() << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ' ';
      out << detail::format_double(m(i, j));
    }
    out << '\n';
  }
}

/// Reads one shape-headed matrix block. `line_no` tracks position for errors.
inline Matrix read_matrix(std::istream& in, std::size_t& line_no) {
  using Kind = ParseError::Kind;
  std::string raw;
  ++line_no;
  if (!std::getline(in, raw)) throw ParseError(Kind::kHeader, line_no, "missing matrix shape header");
  const auto header = detail::split(detail::trim_cr(raw), ' ');
  if (header.size() != 2) throw ParseError(Kind::kHeader, line_no, "shape header must be 'rows cols'");
  const auto rows = detail::parse_int<Index>(header[0]);
  const auto cols = detail::parse_int<Index>(header[1]);
  if (!rows || !cols || *rows < 1 || *cols < 1) throw ParseError(Kind::kHeader, line_no, "bad matrix shape");
  Matrix m(*rows, *cols);
  for (Index i = 0; i < *rows; ++i) {
    ++line_no;
    if (!std::getline(in, raw)) throw ParseError(Kind::kRowCount, line_no, "matrix truncated");
    const auto fields = detail::split(detail::trim_cr(raw), ' ');
    if (static_cast<Index>(fields.size()) != *cols) throw ParseError(Kind::kDimension, line_no, "wrong column count");
    for (Index j = 0; j < *cols; ++j) {
      const auto v = detail::parse_double(fields[static_cast<std::size_t>(j)]);
      if (!v) throw ParseError(Kind::kBadNumber, line_no, "unparsable value");
      m(i, j) = *v;
    }
  }
  return m;
}

inline void save_map(const LinearMap& map, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(ParseError::Kind::kIo, 0, "cannot write " + path);
  write_matrix(map.weight(), out);
  if (!out) throw ParseError(ParseError::Kind::kIo, 0, "write failed for " + path);
}

inline LinearMap load_map(const std::string& path) {
  auto in = detail::open_input(path);
  std::size_t line_no = 0;
  Matrix m = read_matrix(in, line_no);
  if (m.rows() != m.cols()) throw ParseError(ParseError::Kind::kHeader, 1, "map checkpoint must be square");
  return LinearMap(std::move(m));
}

namespace detail {

/// sum_i (1 - cos(a_i, b_i)) and its gradient w.r.t. b (scaled by `scale`).
inline double cosine_gap(const Matrix& a, const Matrix& b, double scale, Matrix* d_b) {
  const Vector na = a.rowwise().norm();
  const Vector nb = b.rowwise().norm();
  if (na.minCoeff() < kDegenerateNorm || nb.minCoeff() < kDegenerateNorm)
    throw DegenerateVectorError("back_translation_loss: degenerate row after round-trip mapping");
  const Matrix ua = na.cwiseInverse().asDiagonal() * a;
  const Matrix ub = nb.cwiseInverse().asDiagonal() * b;
  const Vector cos = ua.cwiseProduct(ub).rowwise().sum();
  if (d_b != nullptr) {
    // d(1 - cos)/db = -(a_hat - cos * b_hat) / |b|
    *d_b = -scale * (nb.cwiseInverse().asDiagonal() * (ua - cos.asDiagonal() * ub));
  }
  return scale * (static_cast<double>(a.rows()) - cos.sum());
}

/// Unweighted back-translation loss given the forward images gx = G(xb) and
/// fy = F(yb); adds beta times its gradient into d_g and d_f.
inline double back_translation_accumulate(const Matrix& xb, const Matrix& yb, const Matrix& gx, const Matrix& fy,
                                          const Matrix& wg, const Matrix& wf, double beta, Matrix& d_g,
                                          Matrix& d_f) {
  const double scale = 1.0 / static_cast<double>(xb.rows());
  Matrix d_fgx, d_gfy;
  const double loss = cosine_gap(xb, gx * wf.transpose(), scale, &d_fgx) +
                      cosine_gap(yb, fy * wg.transpose(), scale, &d_gfy);
  d_fgx *= beta;
  d_gfy *= beta;
  // x -> G -> F
  d_f.noalias() += d_fgx.transpose() * gx;
  d_g.noalias() += (d_fgx * wf).transpose() * xb;
  // y -> F -> G
  d_g.noalias() += d_gfy.transpose() * fy;
  d_f.noalias() += (d_gfy * wg).transpose() * yb;
  return loss;
}

}  // namespace detail

/// Batch-mean back-translation loss, in [0, 4]:
///   (1/b) [ sum_i 1 - cos(x_i, F(G(x_i))) + sum_j 1 - cos(y_j, G(F(y_j))) ]
inline double back_translation_loss(const Matrix& xb, const Matrix& yb, const LinearMap& g, const LinearMap& f) {
  const double scale = 1.0 / static_cast<double>(xb.rows());
  return detail::cosine_gap(xb, apply_map(f, apply_map(g, xb)), scale, nullptr) +
         detail::cosine_gap(yb, apply_map(g, apply_map(f, yb)), scale, nullptr);
}

struct TrainConfig {
  double beta = 0.1;
  SinkhornConfig sinkhorn{};
  Index batch_size = 512;
  std::size_t steps = 2000;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  /// Most frequent words kept per language; unset trains on everything.
  std::optional<Index> train_vocab = 10000;
  /// Frequency-renormalized in-batch marginals instead of uniform 1/b.
  bool frequency_marginals = false;
  SinkhornGradient gradient = SinkhornGradient::kUnrolled;
  /// Window of the moving average used to pick the lowest-loss checkpoint.
  std::size_t smoothing_window = 50;

  void validate() const {
    sinkhorn.validate();
    if (!(beta >= 0.0)) throw std::invalid_argument("TrainConfig: beta must be >= 0");
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (train_vocab && *train_vocab < 1) throw std::invalid_argument("TrainConfig: train_vocab must be positive");
    if (smoothing_window < 1) throw std::invalid_argument("TrainConfig: smoothing_window must be positive");
  }
};

/// One batch's objective, split into its terms.
struct LossComponents {
  double sinkhorn_g = 0.0;
  double sinkhorn_f = 0.0;
  double back_translation = 0.0;
  double total = 0.0;
};

struct LossAndGradients {
  LossComponents loss;
  Matrix d_g;
  Matrix d_f;
};

/// Objective value and, when `with_gradients`, its gradient w.r.t. both weights.
inline LossAndGradients evaluate_objective(const Matrix& xb, const Matrix& yb, const Vector& rb, const Vector& cb,
                                           const LinearMap& g, const LinearMap& f, const TrainConfig& cfg,
                                           bool with_gradients = true) {
  if (xb.cols() != g.dim() || yb.cols() != f.dim() || g.dim() != f.dim())
    throw std::invalid_argument("objective: dimension mismatch");
  if (xb.rows() != yb.rows()) throw std::invalid_argument("objective: batches must have equal size");

  const Matrix gx = apply_map(g, xb);
  const Matrix fy = apply_map(f, yb);
  const Matrix m_g = pairwise_distance_matrix(gx, yb);
  const Matrix m_f = pairwise_distance_matrix(fy, xb);

  LossAndGradients out;
  out.loss.sinkhorn_g = sinkhorn_distance(m_g, rb, cb, cfg.sinkhorn);
  out.loss.sinkhorn_f = sinkhorn_distance(m_f, cb, rb, cfg.sinkhorn);
  if (!with_gradients) {
    out.loss.back_translation = back_translation_loss(xb, yb, g, f);
    out.loss.total = out.loss.sinkhorn_g + out.loss.sinkhorn_f + cfg.beta * out.loss.back_translation;
    return out;
  }

  // Sinkhorn terms: cost -> transformed rows -> weights.
  const Matrix dm_g = sinkhorn_backward(m_g, rb, cb, cfg.sinkhorn, 1.0, cfg.gradient);
  const Matrix dm_f = sinkhorn_backward(m_f, cb, rb, cfg.sinkhorn, 1.0, cfg.gradient);
  const Matrix d_gx = pairwise_distance_backward(gx, yb, dm_g).first;
  const Matrix d_fy = pairwise_distance_backward(fy, xb, dm_f).first;
  out.d_g = d_gx.transpose() * xb;
  out.d_f = d_fy.transpose() * yb;

  out.loss.back_translation =
      detail::back_translation_accumulate(xb, yb, gx, fy, g.weight(), f.weight(), cfg.beta, out.d_g, out.d_f);
  out.loss.total = out.loss.sinkhorn_g + out.loss.sinkhorn_f + cfg.beta * out.loss.back_translation;
  return out;
}

inline LossComponents total_loss(const Matrix& xb, const Matrix& yb, const Vector& rb, const Vector& cb,
                                 const LinearMap& g, const LinearMap& f, const TrainConfig& cfg) {
  return evaluate_objective(xb, yb, rb, cb, g, f, cfg, false).loss;
}

inline std::pair<Matrix, Matrix> loss_gradients(const Matrix& xb, const Matrix& yb, const Vector& rb,
                                                 const Vector& cb, const LinearMap& g, const LinearMap& f,
                                                 const TrainConfig& cfg) {
  auto out = evaluate_objective(xb, yb, rb, cb, g, f, cfg, true);
  return {std::move(out.d_g), std::move(out.d_f)};
}

/// Adam state for one parameter matrix.
class Adam {
 public:
  Adam(Index rows, Index cols, double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Matrix::Zero(rows, cols)), v_(Matrix::Zero(rows, cols)) {}

  void step(Matrix& param, const Matrix& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    param.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  Matrix m_, v_;
  std::size_t t_ = 0;
};

namespace detail {

inline Vector batch_marginal(const EmbeddingSet& e, const std::vector<Index>& idx, bool frequency) {
  const auto b = static_cast<Index>(idx.size());
  if (!frequency) return Vector::Constant(b, 1.0 / static_cast<double>(b));
  Vector w(b);
  for (Index k = 0; k < b; ++k) w[k] = e.weights()[idx[static_cast<std::size_t>(k)]];
  return w / w.sum();
}

}  // namespace detail

struct TrainReport {
  std::vector<LossComponents> records;  ///< one per step, before that step's update
  LinearMap g;
  LinearMap f;
  /// Maps at the step with the lowest moving-average loss (the final maps
  /// when fewer steps than the smoothing window ran).
  LinearMap best_g;
  LinearMap best_f;
  std::size_t best_step = 0;
  double seconds = 0.0;
};

/// Minibatch Adam on the full objective. Deterministic given cfg.seed.
inline TrainReport train(const EmbeddingSet& x, const EmbeddingSet& y, const TrainConfig& cfg,
                         const std::pair<LinearMap, LinearMap>& init,
                         const std::function<void(std::size_t, const LinearMap&, const LinearMap&)>& observer = {}) {
  cfg.validate();
  if (!x.normalized() || !y.normalized()) throw std::invalid_argument("train: embeddings must be L2-normalized");
  if (x.dim() != y.dim()) throw std::invalid_argument("train: embedding dimensions differ");
  if (init.first.dim() != x.dim() || init.second.dim() != x.dim())
    throw std::invalid_argument("train: initial maps do not match the embedding dimension");

  const auto started = std::chrono::steady_clock::now();
  const EmbeddingSet xs = cfg.train_vocab ? x.head(*cfg.train_vocab) : x;
  const EmbeddingSet ys = cfg.train_vocab ? y.head(*cfg.train_vocab) : y;
  BatchSampler sample_x(xs), sample_y(ys);
  Rng rng(cfg.seed);

  Matrix wg = init.first.weight();
  Matrix wf = init.second.weight();
  const Index d = wg.rows();
  Adam opt_g(d, d, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Adam opt_f(d, d, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  TrainReport report;
  report.records.reserve(cfg.steps);
  report.best_g = init.first;
  report.best_f = init.second;
  std::deque<double> window;
  double window_sum = 0.0;
  double best_smoothed = std::numeric_limits<double>::infinity();

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto ix = sample_x(cfg.batch_size, rng);
    const auto iy = sample_y(cfg.batch_size, rng);
    const Matrix xb = gather_rows(xs.vectors(), ix);
    const Matrix yb = gather_rows(ys.vectors(), iy);
    const Vector rb = detail::batch_marginal(xs, ix, cfg.frequency_marginals);
    const Vector cb = detail::batch_marginal(ys, iy, cfg.frequency_marginals);

    LossAndGradients eval;
    try {
      eval = evaluate_objective(xb, yb, rb, cb, LinearMap(wg), LinearMap(wf), cfg);
    } catch (const NumericalError& e) {
      throw DivergenceError(step, e.what());
    } catch (const DegenerateVectorError& e) {
      throw DivergenceError(step, e.what());
    }
    if (!std::isfinite(eval.loss.total) || !eval.d_g.allFinite() || !eval.d_f.allFinite())
      throw DivergenceError(step, "non-finite loss or gradient");
    report.records.push_back(eval.loss);

    // The window scores the maps that produced its losses; the pre-update
    // maps of the last step in the window are kept.
    window.push_back(eval.loss.total);
    window_sum += eval.loss.total;
    if (window.size() > cfg.smoothing_window) {
      window_sum -= window.front();
      window.pop_front();
    }
    if (window.size() == cfg.smoothing_window && window_sum / static_cast<double>(window.size()) < best_smoothed) {
      best_smoothed = window_sum / static_cast<double>(window.size());
      report.best_g = LinearMap(wg);
      report.best_f = LinearMap(wf);
      report.best_step = step;
    }

    opt_g.step(wg, eval.d_g);
    opt_f.step(wf, eval.d_f);
    if (observer) observer(step, LinearMap(wg), LinearMap(wf));
  }
  report.g = LinearMap(wg);
  report.f = LinearMap(wf);
  if (!std::isfinite(best_smoothed)) {
    report.best_g = report.g;
    report.best_f = report.f;
    report.best_step = cfg.steps;
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace sinkalign
