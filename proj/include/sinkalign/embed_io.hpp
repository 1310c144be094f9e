#pragma once

// Embedding, lexicon and similarity-dataset I/O plus frequency-weighted
// batch sampling.
//
// Embedding files use the common word2vec text layout:
//
//   n d
//   word v1 v2 ... vd
//   ...
//
// Files are assumed to be sorted by corpus frequency, most frequent first.
// Words are compared byte-wise.

#include "sinkalign/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace sinkalign {

using Rng = std::mt19937_64;

namespace detail {

inline std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int value{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (s.empty() || ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::kIo, 0, "cannot open " + path);
  return in;
}

}  // namespace detail

/// w_i proportional to i^(-s), rank i starting at 1.
inline Vector zipf_weights(Index n, double s = 1.0) {
  if (n < 1) throw std::invalid_argument("zipf_weights: n must be >= 1");
  if (s < 0.0) throw std::invalid_argument("zipf_weights: exponent must be nonnegative");
  Vector w(n);
  for (Index i = 0; i < n; ++i) w[i] = std::pow(static_cast<double>(i + 1), -s);
  return w / w.sum();
}

/// Vocabulary, one vector per word, and the marginal weight of each word.
///
/// Immutable once built; the constructor checks every invariant.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;

  EmbeddingSet(std::vector<std::string> words, Matrix vectors, Vector weights, bool normalized)
      : words_(std::move(words)),
        vectors_(std::move(vectors)),
        weights_(std::move(weights)),
        normalized_(normalized) {
    if (static_cast<Index>(words_.size()) != vectors_.rows())
      throw std::invalid_argument("EmbeddingSet: word count differs from vector rows");
    if (weights_.size() != vectors_.rows())
      throw std::invalid_argument("EmbeddingSet: weight count differs from vector rows");
    if (!words_.empty()) {
      if ((weights_.array() < 0.0).any() || !weights_.allFinite())
        throw std::invalid_argument("EmbeddingSet: weights must be finite and nonnegative");
      if (std::abs(weights_.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("EmbeddingSet: weights must sum to 1");
    }
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!index_.emplace(words_[i], static_cast<Index>(i)).second)
        throw std::invalid_argument("EmbeddingSet: duplicate word '" + words_[i] + "'");
    }
  }

  Index size() const noexcept { return vectors_.rows(); }
  Index dim() const noexcept { return vectors_.cols(); }
  bool empty() const noexcept { return words_.empty(); }
  bool normalized() const noexcept { return normalized_; }

  const std::vector<std::string>& words() const noexcept { return words_; }
  const Matrix& vectors() const noexcept { return vectors_; }
  const Vector& weights() const noexcept { return weights_; }

  std::optional<Index> find(std::string_view word) const {
    const auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Same words and vectors under a different marginal.
  EmbeddingSet with_weights(Vector weights) const {
    return EmbeddingSet(words_, vectors_, std::move(weights), normalized_);
  }

  /// The `n` first (most frequent) entries, weights renormalized.
  EmbeddingSet head(Index n) const {
    n = std::min(n, size());
    std::vector<std::string> words(words_.begin(), words_.begin() + n);
    Vector w = weights_.head(n);
    const double total = w.sum();
    if (!(total > 0.0)) throw std::invalid_argument("EmbeddingSet::head: retained weights sum to zero");
    return EmbeddingSet(std::move(words), vectors_.topRows(n), w / total, normalized_);
  }

 private:
  std::vector<std::string> words_;
  Matrix vectors_;
  Vector weights_;
  bool normalized_ = false;
  std::unordered_map<std::string, Index> index_;
};

/// Reads a text embedding file. Keeps the first `max_vocab` rows (all when
/// unset) and assigns Zipf weights with exponent `zipf_s` over file order.
inline EmbeddingSet load_embeddings(const std::string& path,
                                    std::optional<Index> max_vocab = std::nullopt,
                                    double zipf_s = 1.0) {
  using Kind = ParseError::Kind;
  auto in = detail::open_input(path);
  std::string raw;
  if (!std::getline(in, raw)) throw ParseError(Kind::kHeader, 1, "missing header");
  const auto header = detail::split(detail::trim_cr(raw), ' ');
  if (header.size() != 2) throw ParseError(Kind::kHeader, 1, "header must be 'n d'");
  const auto n = detail::parse_int<std::int64_t>(header[0]);
  const auto d = detail::parse_int<std::int64_t>(header[1]);
  if (!n || !d || *n < 1 || *d < 1) throw ParseError(Kind::kHeader, 1, "header must hold two positive integers");

  Index keep = static_cast<Index>(*n);
  if (max_vocab) {
    if (*max_vocab < 1) throw std::invalid_argument("load_embeddings: max_vocab must be positive");
    keep = std::min(keep, *max_vocab);
  }

  std::vector<std::string> words;
  words.reserve(static_cast<std::size_t>(keep));
  std::unordered_set<std::string> seen;
  Matrix vectors(keep, static_cast<Index>(*d));
  std::size_t line_no = 1;
  for (Index row = 0; row < keep; ++row) {
    ++line_no;
    if (!std::getline(in, raw))
      throw ParseError(Kind::kRowCount, line_no,
                       "header declares " + std::to_string(*n) + " rows, file has " + std::to_string(row));
    const auto fields = detail::split(detail::trim_cr(raw), ' ');
    if (static_cast<std::int64_t>(fields.size()) != *d + 1)
      throw ParseError(Kind::kDimension, line_no,
                       "expected " + std::to_string(*d) + " values, got " +
                           std::to_string(static_cast<std::int64_t>(fields.size()) - 1));
    std::string word(fields[0]);
    if (word.empty()) throw ParseError(Kind::kBadNumber, line_no, "empty word");
    if (!seen.insert(word).second) throw ParseError(Kind::kDuplicateWord, line_no, "duplicate word '" + word + "'");
    for (Index j = 0; j < *d; ++j) {
      const auto value = detail::parse_double(fields[static_cast<std::size_t>(j) + 1]);
      if (!value)
        throw ParseError(Kind::kBadNumber, line_no,
                         "unparsable value '" + std::string(fields[static_cast<std::size_t>(j) + 1]) + "'");
      vectors(row, j) = *value;
    }
    words.push_back(std::move(word));
  }
  if (keep == *n) {
    // Trailing non-empty lines mean the header undercounts.
    while (std::getline(in, raw)) {
      ++line_no;
      if (!detail::trim_cr(raw).empty())
        throw ParseError(Kind::kRowCount, line_no, "more rows than the header declares (" + std::to_string(*n) + ")");
    }
  }
  return EmbeddingSet(std::move(words), std::move(vectors), zipf_weights(keep, zipf_s), false);
}

/// Writes the set in the same text format, with round-trip exact floats.
inline void save_embeddings(const EmbeddingSet& e, std::ostream& out) {
  out << e.size() << ' ' << e.dim() << '\n';
  for (Index i = 0; i < e.size(); ++i) {
    out << e.words()[static_cast<std::size_t>(i)];
    for (Index j = 0; j < e.dim(); ++j) out << ' ' << detail::format_double(e.vectors()(i, j));
    out << '\n';
  }
}

inline void save_embeddings(const EmbeddingSet& e, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(ParseError::Kind::kIo, 0, "cannot write " + path);
  save_embeddings(e, out);
  if (!out) throw ParseError(ParseError::Kind::kIo, 0, "write failed for " + path);
}

/// Marginal weights from a count file ("word count" per line, space or tab
/// separated). Words absent from the file get weight zero.
inline Vector load_count_weights(const std::string& path, const EmbeddingSet& e) {
  using Kind = ParseError::Kind;
  auto in = detail::open_input(path);
  Vector counts = Vector::Zero(e.size());
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = detail::trim_cr(raw);
    if (line.empty()) continue;
    const auto cut = line.find_first_of(" \t");
    if (cut == std::string_view::npos) throw ParseError(Kind::kColumnCount, line_no, "expected 'word count'");
    const auto count = detail::parse_double(line.substr(cut + 1));
    if (!count || *count < 0.0) throw ParseError(Kind::kBadNumber, line_no, "count must be a nonnegative number");
    if (const auto idx = e.find(line.substr(0, cut))) counts[*idx] = *count;
  }
  const double total = counts.sum();
  if (!(total > 0.0)) throw ParseError(Kind::kOutOfRange, 0, "no vocabulary word has a positive count in " + path);
  return counts / total;
}

/// Scales each row to unit L2 norm. Rows with norm below 1e-12 are dropped
/// together with their word and weight; the remaining weights are
/// renormalized.
inline EmbeddingSet l2_normalize(const EmbeddingSet& e) {
  std::vector<std::string> words;
  std::vector<Index> kept;
  for (Index i = 0; i < e.size(); ++i) {
    if (e.vectors().row(i).norm() >= kDegenerateNorm) kept.push_back(i);
  }
  if (kept.empty()) throw DegenerateVectorError("l2_normalize: every row has zero norm");
  Matrix vectors(static_cast<Index>(kept.size()), e.dim());
  Vector weights(static_cast<Index>(kept.size()));
  words.reserve(kept.size());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const Index i = kept[k];
    const auto row = e.vectors().row(i);
    vectors.row(static_cast<Index>(k)) = row / row.norm();
    weights[static_cast<Index>(k)] = e.weights()[i];
    words.push_back(e.words()[static_cast<std::size_t>(i)]);
  }
  const double total = weights.sum();
  if (!(total > 0.0)) throw DegenerateVectorError("l2_normalize: surviving rows carry no weight");
  return EmbeddingSet(std::move(words), std::move(vectors), weights / total, true);
}

/// Gold translation pairs. A source word may have several valid targets.
struct Lexicon {
  std::vector<std::pair<std::string, std::string>> pairs;

  /// Sources in first-appearance order, each with all of its targets.
  std::vector<std::pair<std::string, std::vector<std::string>>> grouped() const {
    std::vector<std::pair<std::string, std::vector<std::string>>> out;
    std::unordered_map<std::string, std::size_t> slot;
    for (const auto& [src, tgt] : pairs) {
      auto [it, inserted] = slot.emplace(src, out.size());
      if (inserted) out.emplace_back(src, std::vector<std::string>{});
      out[it->second].second.push_back(tgt);
    }
    return out;
  }
};

struct SimTriple {
  std::string word1;
  std::string word2;
  double score = 0.0;
};

/// Word pairs with human similarity scores in [0, 4].
struct SimDataset {
  std::vector<SimTriple> triples;
};

inline Lexicon load_lexicon(const std::string& path) {
  using Kind = ParseError::Kind;
  auto in = detail::open_input(path);
  Lexicon lex;
  std::unordered_set<std::string> seen;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim_cr(raw);
    if (line.empty()) continue;
    const auto cols = detail::split(line, '\t');
    if (cols.size() != 2 || cols[0].empty() || cols[1].empty())
      throw ParseError(Kind::kColumnCount, line_no, "lexicon rows must be 'source<TAB>target'");
    std::string key(cols[0]);
    key += '\t';
    key += cols[1];
    if (seen.insert(std::move(key)).second) lex.pairs.emplace_back(std::string(cols[0]), std::string(cols[1]));
  }
  return lex;
}

inline SimDataset load_sim_dataset(const std::string& path) {
  using Kind = ParseError::Kind;
  auto in = detail::open_input(path);
  SimDataset ds;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim_cr(raw);
    if (line.empty()) continue;
    const auto cols = detail::split(line, '\t');
    if (cols.size() != 3) throw ParseError(Kind::kColumnCount, line_no, "similarity rows must be 'w1<TAB>w2<TAB>score'");
    const auto score = detail::parse_double(cols[2]);
    if (!score) throw ParseError(Kind::kBadNumber, line_no, "unparsable score '" + std::string(cols[2]) + "'");
    if (*score < 0.0 || *score > 4.0)
      throw ParseError(Kind::kOutOfRange, line_no, "score " + std::string(cols[2]) + " outside [0, 4]");
    ds.triples.push_back({std::string(cols[0]), std::string(cols[1]), *score});
  }
  return ds;
}

/// Draws row indices with replacement, proportionally to the set's weights.
class BatchSampler {
 public:
  explicit BatchSampler(const Vector& weights) : dist_(weights.data(), weights.data() + weights.size()) {}
  explicit BatchSampler(const EmbeddingSet& e) : BatchSampler(e.weights()) {}

  std::vector<Index> operator()(Index batch_size, Rng& rng) {
    if (batch_size < 1) throw std::invalid_argument("sample_batch: batch size must be >= 1");
    std::vector<Index> out(static_cast<std::size_t>(batch_size));
    for (auto& idx : out) idx = static_cast<Index>(dist_(rng));
    return out;
  }

 private:
  std::discrete_distribution<std::size_t> dist_;
};

inline std::vector<Index> sample_batch(const EmbeddingSet& e, Index batch_size, Rng& rng) {
  return BatchSampler(e)(batch_size, rng);
}

/// Rows of `m` at `indices`, in order.
inline Matrix gather_rows(const Matrix& m, const std::vector<Index>& indices) {
  Matrix out(static_cast<Index>(indices.size()), m.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) out.row(static_cast<Index>(k)) = m.row(indices[k]);
  return out;
}

}  // namespace sinkalign
