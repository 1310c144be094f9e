#pragma once

// Bilingual lexicon induction, cross-lingual word similarity, and a
// synthetic rotated-pair generator with known ground truth.

#include "sinkalign/common.hpp"
#include "sinkalign/embed_io.hpp"
#include "sinkalign/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

namespace sinkalign {

namespace detail {

/// Indices of the k largest entries; ties go to the lower index.
inline std::vector<Index> topk_indices(const Eigen::Ref<const Vector>& scores, Index k) {
  std::vector<Index> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](Index a, Index b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

inline void require_normalized(const EmbeddingSet& e, const char* what) {
  if (!e.normalized()) throw std::invalid_argument(std::string(what) + ": embeddings must be L2-normalized");
}

}  // namespace detail

/// Rows of `e` (the first `limit` rows when set) with the k largest cosines to `query`.
inline std::vector<Index> topk_by_cosine(const Eigen::Ref<const Vector>& query, const EmbeddingSet& e, Index k,
                                         std::optional<Index> limit = std::nullopt) {
  detail::require_normalized(e, "topk_by_cosine");
  const Index n = limit ? std::min(*limit, e.size()) : e.size();
  if (k < 1 || k > n) throw std::out_of_range("topk_by_cosine: k out of range");
  if (query.size() != e.dim()) throw std::invalid_argument("topk_by_cosine: query dimension mismatch");
  const double qn = query.norm();
  if (qn < kDegenerateNorm) throw DegenerateVectorError("topk_by_cosine: zero query");
  const Vector scores = e.vectors().topRows(n) * (query / qn);
  return detail::topk_indices(scores, k);
}

struct BliResult {
  double accuracy = 0.0;
  Index k = 1;
  Index evaluated = 0;
  Index skipped = 0;
};

/// accuracy@k: a query succeeds when any of its gold targets is among the k
/// target words nearest to G(x) by cosine. Queries missing from the source
/// vocabulary are skipped and counted. `candidates` restricts retrieval to
/// the most frequent target words.
inline BliResult accuracy_at_k(const LinearMap& g, const EmbeddingSet& src, const EmbeddingSet& tgt,
                               const Lexicon& lex, Index k, std::optional<Index> candidates = std::nullopt) {
  detail::require_normalized(src, "accuracy_at_k");
  detail::require_normalized(tgt, "accuracy_at_k");
  const Index n_tgt = candidates ? std::min(*candidates, tgt.size()) : tgt.size();
  if (k < 1 || k > n_tgt) throw std::out_of_range("accuracy_at_k: k out of range");

  BliResult result;
  result.k = k;
  std::vector<Index> rows;
  std::vector<std::unordered_set<Index>> gold;
  for (const auto& [source, targets] : lex.grouped()) {
    const auto row = src.find(source);
    if (!row) {
      ++result.skipped;
      continue;
    }
    rows.push_back(*row);
    std::unordered_set<Index> ids;
    for (const auto& t : targets) {
      if (const auto j = tgt.find(t)) ids.insert(*j);
    }
    gold.push_back(std::move(ids));
  }
  result.evaluated = static_cast<Index>(rows.size());
  if (result.evaluated == 0) throw EmptyEvaluationError("accuracy_at_k: no lexicon source word is in the vocabulary");

  // Score in blocks to bound memory on large vocabularies.
  constexpr Index kBlock = 256;
  const auto candidates_block = tgt.vectors().topRows(n_tgt);
  Index hits = 0;
  for (Index start = 0; start < result.evaluated; start += kBlock) {
    const Index len = std::min(kBlock, result.evaluated - start);
    Matrix queries(len, src.dim());
    for (Index i = 0; i < len; ++i) queries.row(i) = src.vectors().row(rows[static_cast<std::size_t>(start + i)]);
    Matrix mapped = apply_map(g, queries);
    const Vector norms = mapped.rowwise().norm();
    if (norms.minCoeff() < kDegenerateNorm) throw DegenerateVectorError("accuracy_at_k: mapped query has zero norm");
    mapped = norms.cwiseInverse().asDiagonal() * mapped;
    const Matrix scores = mapped * candidates_block.transpose();
    for (Index i = 0; i < len; ++i) {
      const auto& targets = gold[static_cast<std::size_t>(start + i)];
      const auto top = detail::topk_indices(scores.row(i).transpose(), k);
      if (std::any_of(top.begin(), top.end(), [&](Index j) { return targets.count(j) > 0; })) ++hits;
    }
  }
  result.accuracy = static_cast<double>(hits) / static_cast<double>(result.evaluated);
  return result;
}

/// Product-moment correlation.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least two points");
  const Eigen::Map<const Vector> xv(x.data(), static_cast<Index>(x.size()));
  const Eigen::Map<const Vector> yv(y.data(), static_cast<Index>(y.size()));
  const Vector xc = xv.array() - xv.mean();
  const Vector yc = yv.array() - yv.mean();
  const double sxx = xc.squaredNorm();
  const double syy = yc.squaredNorm();
  if (sxx == 0.0 || syy == 0.0) throw std::domain_error("pearson: zero variance");
  return std::clamp(xc.dot(yc) / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct SimResult {
  double pearson = 0.0;
  double coverage = 0.0;
  Index evaluated = 0;
};

/// Correlation between cos(G(x_w1), y_w2) and the annotated scores over the
/// pairs with both words in vocabulary.
inline SimResult word_similarity_eval(const LinearMap& g, const EmbeddingSet& src, const EmbeddingSet& tgt,
                                      const SimDataset& ds) {
  detail::require_normalized(src, "word_similarity_eval");
  detail::require_normalized(tgt, "word_similarity_eval");
  std::vector<double> predicted, annotated;
  for (const auto& t : ds.triples) {
    const auto i = src.find(t.word1);
    const auto j = tgt.find(t.word2);
    if (!i || !j) continue;
    const Vector mapped = g.weight() * src.vectors().row(*i).transpose();
    predicted.push_back(cosine(mapped, tgt.vectors().row(*j).transpose()));
    annotated.push_back(t.score);
  }
  if (predicted.size() < 2) throw EmptyEvaluationError("word_similarity_eval: fewer than two in-vocabulary pairs");
  SimResult r;
  r.evaluated = static_cast<Index>(predicted.size());
  r.coverage = static_cast<double>(predicted.size()) / static_cast<double>(ds.triples.size());
  r.pearson = pearson(predicted, annotated);
  return r;
}

struct SynthPair {
  EmbeddingSet src;
  EmbeddingSet tgt;
  Lexicon lexicon;
  Matrix rotation;  ///< the gold map Q
};

/// Random orthogonal d x d matrix: QR of a Gaussian matrix, signs fixed so R
/// has a positive diagonal.
inline Matrix random_orthogonal(Index d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = normal(rng);
  const Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

/// n unit Gaussian source vectors w0..w(n-1); targets are their rotations
/// by a random orthogonal Q plus N(0, noise^2) noise, renormalized. Both
/// sides carry Zipf(1) weights in row order; the lexicon maps wi to wi.
inline SynthPair synth_pair(Index n, Index d, double noise_sigma, std::uint64_t seed) {
  if (n < 2 || d < 2) throw std::invalid_argument("synth_pair: need n >= 2 and d >= 2");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synth_pair: noise must be nonnegative");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(n, d);
  for (Index i = 0; i < n; ++i) {
    do {
      for (Index j = 0; j < d; ++j) x(i, j) = normal(rng);
    } while (x.row(i).norm() < kDegenerateNorm);
    x.row(i).normalize();
  }
  SynthPair out;
  out.rotation = random_orthogonal(d, rng);
  Matrix y = x * out.rotation.transpose();
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) y(i, j) += noise_sigma * normal(rng);
    y.row(i).normalize();
  }
  std::vector<std::string> words;
  words.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) words.push_back("w" + std::to_string(i));
  for (const auto& w : words) out.lexicon.pairs.emplace_back(w, w);
  const Vector weights = zipf_weights(n, 1.0);
  out.src = EmbeddingSet(words, std::move(x), weights, true);
  out.tgt = EmbeddingSet(std::move(words), std::move(y), weights, true);
  return out;
}

/// One row of a TSV metrics report.
struct ReportRow {
  std::string metric;
  std::string value;
  std::string metadata;
};

inline void write_report(const std::vector<ReportRow>& rows, std::ostream& out) {
  out << "metric\tvalue\tmetadata\n";
  for (const auto& r : rows) out << r.metric << '\t' << r.value << '\t' << r.metadata << '\n';
}

inline std::vector<ReportRow> bli_report(const BliResult& r) {
  return {
      {"accuracy@" + std::to_string(r.k), detail::format_double(r.accuracy), "k=" + std::to_string(r.k)},
      {"evaluated", std::to_string(r.evaluated), ""},
      {"skipped", std::to_string(r.skipped), ""},
  };
}

inline std::vector<ReportRow> sim_report(const SimResult& r) {
  return {
      {"pearson", detail::format_double(r.pearson), "pairs=" + std::to_string(r.evaluated)},
      {"coverage", detail::format_double(r.coverage), ""},
  };
}

}  // namespace sinkalign
