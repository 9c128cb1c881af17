#include "geocpet/metrics.hpp"

#include <random>

#include <gtest/gtest.h>

#include "geocpet/rng.hpp"

namespace geocpet {
namespace {

using V = std::vector<double>;
using L = std::vector<int>;

// Brute-force pair counting over every (positive, negative) pair.
double oracle_auc(const V& scores, const L& labels, int positive) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != positive) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == positive) continue;
      ++pairs;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  return wins / static_cast<double>(pairs);
}

// F1-macro from an explicit confusion matrix.
double oracle_f1(const L& labels, const L& predicted) {
  std::vector<int> classes(labels);
  classes.insert(classes.end(), predicted.begin(), predicted.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const std::size_t k = classes.size();
  std::vector<std::vector<int>> cm(k, std::vector<int>(k, 0));
  auto idx = [&](int c) { return std::lower_bound(classes.begin(), classes.end(), c) - classes.begin(); };
  for (std::size_t i = 0; i < labels.size(); ++i) ++cm[idx(labels[i])][idx(predicted[i])];
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += cm[c][j];
      col += cm[j][c];
    }
    const double tp = cm[c][c];
    const double precision = col > 0 ? tp / col : 0.0;
    const double recall = row > 0 ? tp / row : 0.0;
    total += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  return total / static_cast<double>(k);
}

TEST(R2, Examples) {
  EXPECT_EQ(r2(V{1, 2, 3}, V{1, 2, 3}), 1.0);
  EXPECT_EQ(r2(V{1, 2, 3}, V{2, 2, 2}), 0.0);
  EXPECT_DOUBLE_EQ(r2(V{1, 2, 3}, V{1, 2, 4}), 0.5);
  EXPECT_LT(r2(V{1, 2, 3}, V{3, 2, 1}), 0.0);
  try {
    r2(V{2, 2, 2}, V{1, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate_target);
  }
  EXPECT_THROW(r2(V{1}, V{1}), Error);
}

TEST(AdjustedR2, Examples) {
  EXPECT_EQ(adjusted_r2(1.0, 10, 3), 1.0);
  EXPECT_NEAR(adjusted_r2(0.5, 11, 1), 1.0 - 0.5 * 10.0 / 9.0, 1e-15);
  EXPECT_LT(adjusted_r2(0.5, 11, 9), 0.5);
  try {
    adjusted_r2(0.5, 5, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::insufficient_samples);
  }
}

TEST(RmsePearson, Examples) {
  EXPECT_EQ(rmse(V{1, 2, 3}, V{1, 2, 3}), 0.0);
  EXPECT_EQ(rmse(V{0, 0, 3, 3}, V{1, 1, 2, 2}), 1.0);
  EXPECT_DOUBLE_EQ(pearson_r(V{1, 2, 4}, V{1, 2, 4}), 1.0);
  EXPECT_DOUBLE_EQ(pearson_r(V{1, 2, 4}, V{9, 8, 6}), -1.0);
  try {
    pearson_r(V{1, 1, 1}, V{1, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate_input);
  }
}

TEST(RmsePearson, PearsonSymmetric) {
  Rng rng(1);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 50; ++t) {
    V a(20), b(20);
    for (int i = 0; i < 20; ++i) {
      a[i] = nd(rng);
      b[i] = a[i] + nd(rng);
    }
    EXPECT_EQ(pearson_r(a, b), pearson_r(b, a));
    EXPECT_LE(std::abs(pearson_r(a, b)), 1.0);
  }
}

TEST(Auc, Examples) {
  EXPECT_EQ(binary_auc(V{0.1, 0.4, 0.35, 0.8}, L{0, 0, 1, 1}, 1), 0.75);
  EXPECT_EQ(binary_auc(V{0.5, 0.5, 0.5, 0.5}, L{0, 1, 0, 1}, 1), 0.5);
  EXPECT_EQ(binary_auc(V{0.1, 0.9}, L{0, 1}, 1), 1.0);
  EXPECT_TRUE(std::isnan(binary_auc(V{0.1, 0.9}, L{1, 1}, 1)));
}

TEST(ClassificationMetricsTest, PerfectBalanced) {
  Matrix scores(4, 2);
  scores << 1, 0, 1, 0, 0, 1, 0, 1;
  const auto m = classification_metrics(L{0, 0, 1, 1}, L{0, 0, 1, 1}, scores, L{0, 1});
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.auc, 1.0);
  EXPECT_EQ(m.f1_macro, 1.0);
  EXPECT_FALSE(m.degenerate);
}

TEST(ClassificationMetricsTest, DegenerateFlagged) {
  Matrix scores(2, 2);
  scores << 1, 0, 1, 0;
  const auto m = classification_metrics(L{0, 0}, L{0, 1}, scores, L{0, 1});
  EXPECT_TRUE(m.degenerate);
  EXPECT_TRUE(std::isnan(m.auc));
  EXPECT_EQ(m.accuracy, 0.5);
}

TEST(F1, AbsentClassCountsZero) {
  // Class 2 predicted but never true: F1 0 for it.
  EXPECT_DOUBLE_EQ(f1_macro(L{0, 1}, L{0, 2}), (1.0 + 0.0 + 0.0) / 3.0);
}

TEST(Oracles, RandomFixturesMatchExactly) {
  Rng rng(2);
  std::uniform_int_distribution<int> size(2, 200);
  std::uniform_int_distribution<int> nclass(2, 5);
  std::uniform_int_distribution<int> coarse(0, 6);  // creates ties
  std::normal_distribution<double> nd;
  for (int t = 0; t < 300; ++t) {
    const int n = size(rng), k = nclass(rng);
    std::uniform_int_distribution<int> cls(0, k - 1);
    L labels(n), predicted(n);
    Matrix scores(n, k);
    for (int i = 0; i < n; ++i) {
      labels[i] = cls(rng);
      predicted[i] = cls(rng);
      for (int c = 0; c < k; ++c) scores(i, c) = t % 2 ? coarse(rng) : nd(rng);
    }
    L classes(k);
    std::iota(classes.begin(), classes.end(), 0);
    double total = 0.0;
    int used = 0;
    for (int c = 0; c < k; ++c) {
      V col(n);
      for (int i = 0; i < n; ++i) col[i] = scores(i, c);
      const bool has_pos = std::count(labels.begin(), labels.end(), c) > 0;
      const bool has_neg = std::count(labels.begin(), labels.end(), c) < n;
      if (!has_pos || !has_neg) continue;
      const double oracle = oracle_auc(col, labels, c);
      ASSERT_EQ(binary_auc(col, labels, c), oracle);
      total += oracle;
      ++used;
    }
    const auto m = classification_metrics(labels, predicted, scores, classes);
    if (used) EXPECT_EQ(m.auc, total / used);
    EXPECT_NEAR(m.f1_macro, oracle_f1(labels, predicted), 1e-12);
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += labels[i] == predicted[i];
    EXPECT_EQ(m.accuracy, double(hits) / n);
  }
}

TEST(Aggregation, MeanStdRecomputable) {
  const V v{0.5, 0.7, std::nan(""), 0.9};
  const auto a = aggregate(v);
  EXPECT_EQ(a.count, 3u);
  EXPECT_EQ(a.skipped, 1u);
  EXPECT_DOUBLE_EQ(a.mean, 0.7);
  EXPECT_DOUBLE_EQ(a.sd, 0.2);
  EXPECT_EQ(aggregate(V{2.0}).sd, 0.0);
  EXPECT_TRUE(std::isnan(aggregate(V{}).mean));
}

}  // namespace
}  // namespace geocpet
