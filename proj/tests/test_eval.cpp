#include "sinkalign/eval.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace sinkalign;
using sinkalign::testing::random_matrix;

namespace {

EmbeddingSet unit_set(const Matrix& raw, const std::string& prefix = "w") {
  std::vector<std::string> words;
  for (Index i = 0; i < raw.rows(); ++i) words.push_back(prefix + std::to_string(i));
  return l2_normalize(EmbeddingSet(words, raw, zipf_weights(raw.rows()), false));
}

Lexicon self_lexicon(const EmbeddingSet& e) {
  Lexicon lex;
  for (const auto& w : e.words()) lex.pairs.emplace_back(w, w);
  return lex;
}

}  // namespace

TEST(TopK, SelfRetrieval) {
  std::mt19937_64 rng(1);
  const auto e = unit_set(random_matrix(20, 6, rng));
  const Vector q = e.vectors().row(7).transpose();
  EXPECT_EQ(topk_by_cosine(q, e, 1)[0], 7);
  EXPECT_EQ(topk_by_cosine(2.5 * q, e, 3), topk_by_cosine(q, e, 3));
}

TEST(TopK, FullRankIsPermutation) {
  std::mt19937_64 rng(2);
  const auto e = unit_set(random_matrix(15, 4, rng));
  auto all = topk_by_cosine(Vector::Ones(4), e, 15);
  std::sort(all.begin(), all.end());
  for (Index i = 0; i < 15; ++i) EXPECT_EQ(all[static_cast<std::size_t>(i)], i);
}

TEST(TopK, HandComputedOrder) {
  const EmbeddingSet e({"a", "b", "c"}, Matrix{{1.0, 0.0}, {0.0, 1.0}, {0.6, 0.8}}, zipf_weights(3), true);
  EXPECT_EQ(topk_by_cosine(Vector{{1.0, 0.0}}, e, 2), (std::vector<Index>{0, 2}));
}

TEST(TopK, TiesGoToLowerIndex) {
  const EmbeddingSet e({"a", "b", "c"}, Matrix{{0.0, 1.0}, {1.0, 0.0}, {1.0, 0.0}}, zipf_weights(3), true);
  EXPECT_EQ(topk_by_cosine(Vector{{1.0, 0.0}}, e, 2), (std::vector<Index>{1, 2}));
}

TEST(TopK, KOutOfRange) {
  const EmbeddingSet e({"a"}, Matrix{{1.0, 0.0}}, Vector::Ones(1), true);
  EXPECT_THROW(topk_by_cosine(Vector{{1.0, 0.0}}, e, 2), std::out_of_range);
  EXPECT_THROW(topk_by_cosine(Vector{{1.0, 0.0}}, e, 0), std::out_of_range);
}

TEST(Bli, IdentityOnIdenticalSpaces) {
  std::mt19937_64 rng(3);
  const auto e = unit_set(random_matrix(50, 8, rng));
  const auto r = accuracy_at_k(LinearMap::identity(8), e, e, self_lexicon(e), 1);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.evaluated, 50);
  EXPECT_EQ(r.skipped, 0);
}

TEST(Bli, UnreachableTargetsScoreZero) {
  std::mt19937_64 rng(4);
  const auto e = unit_set(random_matrix(10, 3, rng));
  Lexicon lex;
  lex.pairs = {{"w0", "nope"}, {"w1", "nada"}, {"missing", "w1"}};
  const auto r = accuracy_at_k(LinearMap::identity(3), e, e, lex, 1);
  EXPECT_EQ(r.accuracy, 0.0);
  EXPECT_EQ(r.evaluated, 2);
  EXPECT_EQ(r.skipped, 1);
}

TEST(Bli, NoEvaluableQueries) {
  std::mt19937_64 rng(5);
  const auto e = unit_set(random_matrix(10, 3, rng));
  Lexicon lex;
  lex.pairs = {{"x", "w0"}};
  EXPECT_THROW(accuracy_at_k(LinearMap::identity(3), e, e, lex, 1), EmptyEvaluationError);
}

TEST(Bli, AnyGoldTargetCounts) {
  const EmbeddingSet src({"s"}, Matrix{{1.0, 0.0}}, Vector::Ones(1), true);
  const EmbeddingSet tgt({"t0", "t1"}, Matrix{{0.0, 1.0}, {1.0, 0.0}}, zipf_weights(2), true);
  Lexicon lex;
  lex.pairs = {{"s", "t0"}, {"s", "t1"}};
  const auto r = accuracy_at_k(LinearMap::identity(2), src, tgt, lex, 1);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.evaluated, 1);
}

TEST(Bli, NondecreasingInK) {
  std::mt19937_64 rng(6);
  const auto src = unit_set(random_matrix(40, 5, rng));
  const auto tgt = unit_set(random_matrix(40, 5, rng));
  const LinearMap g(random_matrix(5, 5, rng));
  double previous = -1.0;
  for (Index k = 1; k <= 40; ++k) {
    const double acc = accuracy_at_k(g, src, tgt, self_lexicon(src), k).accuracy;
    EXPECT_GE(acc, previous);
    previous = acc;
  }
  EXPECT_EQ(previous, 1.0);
}

TEST(Bli, CandidateCapRestrictsRetrieval) {
  const EmbeddingSet e({"a", "b", "c"}, Matrix{{1.0, 0.0}, {0.0, 1.0}, {0.6, 0.8}}, zipf_weights(3), true);
  Lexicon lex;
  lex.pairs = {{"c", "c"}};
  EXPECT_EQ(accuracy_at_k(LinearMap::identity(2), e, e, lex, 1).accuracy, 1.0);
  EXPECT_EQ(accuracy_at_k(LinearMap::identity(2), e, e, lex, 1, 2).accuracy, 0.0);
}

TEST(Pearson, KnownValues) {
  EXPECT_NEAR(pearson({1, 2, 3, 4}, {3, 5, 7, 9}), 1.0, 1e-15);
  EXPECT_NEAR(pearson({1, 2, 3}, {-1, -2, -3}), -1.0, 1e-15);
  // covariance 3, variances 2 and 14/3
  EXPECT_NEAR(pearson({1, 2, 3}, {1, 2, 4}), 3.0 / std::sqrt(2.0 * 14.0 / 3.0), 1e-12);
  EXPECT_NEAR(pearson({1, 2, 3}, {1, 2, 4}), 0.981981, 1e-6);
}

TEST(Pearson, AffineInvarianceAndSymmetry) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(30), y(30);
    for (auto& v : x) v = normal(rng);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.5 * x[i] + normal(rng);
    std::vector<double> xa(x.size());
    std::transform(x.begin(), x.end(), xa.begin(), [](double v) { return 3.5 * v - 2.0; });
    EXPECT_NEAR(pearson(x, y), pearson(xa, y), 1e-9);
    EXPECT_NEAR(pearson(x, y), pearson(y, x), 1e-15);
  }
}

TEST(Pearson, Errors) {
  EXPECT_THROW(pearson({1, 1, 1}, {1, 2, 3}), std::domain_error);
  EXPECT_THROW(pearson({1}, {1}), std::invalid_argument);
  EXPECT_THROW(pearson({1, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST(WordSimilarity, SelfConsistentScores) {
  std::mt19937_64 rng(8);
  const auto src = unit_set(random_matrix(12, 4, rng), "s");
  const auto tgt = unit_set(random_matrix(12, 4, rng), "t");
  const LinearMap g(random_matrix(4, 4, rng));
  SimDataset ds;
  for (Index i = 0; i < 12; ++i) {
    const Vector mapped = g.weight() * src.vectors().row(i).transpose();
    const double c = cosine(mapped, tgt.vectors().row((i * 5) % 12).transpose());
    ds.triples.push_back({src.words()[static_cast<std::size_t>(i)],
                          tgt.words()[static_cast<std::size_t>((i * 5) % 12)], 2.0 + 2.0 * c});
  }
  ds.triples.push_back({"oov", "t0", 1.0});
  const auto r = word_similarity_eval(g, src, tgt, ds);
  EXPECT_NEAR(r.pearson, 1.0, 1e-12);
  EXPECT_NEAR(r.coverage, 12.0 / 13.0, 1e-15);
}

TEST(WordSimilarity, NoisyScoresStayCorrelated) {
  std::mt19937_64 rng(9);
  const auto src = unit_set(random_matrix(200, 10, rng), "s");
  const auto tgt = unit_set(random_matrix(200, 10, rng), "t");
  const LinearMap g(Matrix::Identity(10, 10));
  std::normal_distribution<double> noise(0.0, 0.02);
  SimDataset ds;
  for (Index i = 0; i < 200; ++i) {
    const double c = cosine(src.vectors().row(i).transpose(), tgt.vectors().row(i).transpose());
    ds.triples.push_back({src.words()[static_cast<std::size_t>(i)], tgt.words()[static_cast<std::size_t>(i)],
                          std::clamp(2.0 + 2.0 * c + noise(rng), 0.0, 4.0)});
  }
  EXPECT_GE(word_similarity_eval(g, src, tgt, ds).pearson, 0.95);
}

TEST(WordSimilarity, AllOutOfVocabulary) {
  std::mt19937_64 rng(10);
  const auto e = unit_set(random_matrix(5, 3, rng));
  SimDataset ds;
  ds.triples = {{"a", "b", 1.0}, {"c", "d", 2.0}};
  EXPECT_THROW(word_similarity_eval(LinearMap::identity(3), e, e, ds), EmptyEvaluationError);
}

TEST(Synth, RotationIsOrthogonal) {
  const auto sp = synth_pair(50, 12, 0.0, 3);
  const Matrix& q = sp.rotation;
  EXPECT_LE((q.transpose() * q - Matrix::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Synth, NoiselessGoldMapIsExact) {
  const auto sp = synth_pair(300, 10, 0.0, 4);
  EXPECT_EQ(accuracy_at_k(LinearMap(sp.rotation), sp.src, sp.tgt, sp.lexicon, 1).accuracy, 1.0);
  EXPECT_TRUE(sp.src.normalized());
  EXPECT_EQ(sp.src.words()[3], "w3");
}

TEST(Synth, SmallNoiseGoldMapNearlyExact) {
  const auto sp = synth_pair(2000, 50, 0.01, 0);
  EXPECT_GE(accuracy_at_k(LinearMap(sp.rotation), sp.src, sp.tgt, sp.lexicon, 1).accuracy, 0.99);
}

TEST(Synth, ReproducibleGivenSeed) {
  const auto a = synth_pair(100, 8, 0.05, 42);
  const auto b = synth_pair(100, 8, 0.05, 42);
  EXPECT_TRUE(a.src.vectors() == b.src.vectors());
  EXPECT_TRUE(a.tgt.vectors() == b.tgt.vectors());
  EXPECT_TRUE(a.rotation == b.rotation);
  const auto c = synth_pair(100, 8, 0.05, 43);
  EXPECT_FALSE(a.tgt.vectors() == c.tgt.vectors());
}

TEST(Report, TsvLayout) {
  BliResult r;
  r.accuracy = 0.75;
  r.k = 5;
  r.evaluated = 4;
  r.skipped = 1;
  std::ostringstream out;
  write_report(bli_report(r), out);
  EXPECT_EQ(out.str(), "metric\tvalue\tmetadata\naccuracy@5\t0.75\tk=5\nevaluated\t4\t\nskipped\t1\t\n");
}
