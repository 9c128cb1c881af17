#pragma once

// Regression and classification metrics plus mean/std aggregation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "geocpet/error.hpp"
#include "geocpet/spd.hpp"

namespace geocpet {

namespace detail {

inline void check_pair(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) {
    throw Error(Errc::dimension_mismatch, std::to_string(y.size()) + " targets vs " +
                                              std::to_string(yhat.size()) + " predictions");
  }
  if (y.size() < 2) throw Error(Errc::insufficient_samples, "need at least 2 samples");
}

inline double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace detail

/// 1 - SSR / SST. May be negative.
inline double r2(std::span<const double> y, std::span<const double> yhat) {
  detail::check_pair(y, yhat);
  const double ybar = detail::mean_of(y);
  double ssr = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ssr += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    sst += (y[i] - ybar) * (y[i] - ybar);
  }
  if (!(sst > 0.0)) throw Error(Errc::degenerate_target, "targets have zero variance");
  return 1.0 - ssr / sst;
}

/// 1 - (1 - R^2)(n - 1)/(n - p - 1).
inline double adjusted_r2(double r2_value, std::size_t n_samples, std::size_t n_features) {
  if (n_samples <= n_features + 1) {
    throw Error(Errc::insufficient_samples, "adjusted R^2 needs n > p + 1 (n=" + std::to_string(n_samples) +
                                                ", p=" + std::to_string(n_features) + ")");
  }
  const double n = static_cast<double>(n_samples), p = static_cast<double>(n_features);
  return 1.0 - (1.0 - r2_value) * (n - 1.0) / (n - p - 1.0);
}

inline double rmse(std::span<const double> y, std::span<const double> yhat) {
  detail::check_pair(y, yhat);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

inline double pearson_r(std::span<const double> a, std::span<const double> b) {
  detail::check_pair(a, b);
  const double ma = detail::mean_of(a), mb = detail::mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(Errc::degenerate_input, "zero variance in correlation input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double accuracy(std::span<const int> labels, std::span<const int> predicted) {
  if (labels.size() != predicted.size()) throw Error(Errc::dimension_mismatch, "label/prediction length mismatch");
  if (labels.empty()) throw Error(Errc::empty_input, "no samples");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += labels[i] == predicted[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

/// Mann-Whitney AUC of `scores` for samples labelled `positive_class` against
/// all others; ties count 1/2. NaN when either side is empty.
inline double binary_auc(std::span<const double> scores, std::span<const int> labels, int positive_class) {
  if (scores.size() != labels.size()) throw Error(Errc::dimension_mismatch, "score/label length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the average rank keeps everything in exact half-integer arithmetic.
  double rank_sum2 = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double twice_avg = static_cast<double>(i + 1 + j);  // 2 * (i+1 + j)/2
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == positive_class) {
        rank_sum2 += twice_avg;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  // U = R_pos - np(np+1)/2; with doubled ranks: (2 R_pos - np(np+1)) / 2.
  return (rank_sum2 - np * (np + 1.0)) / (2.0 * np * nn);
}

/// Unweighted mean of per-class F1 over the classes present in labels or
/// predictions. A class that is predicted but never true scores 0.
inline double f1_macro(std::span<const int> labels, std::span<const int> predicted) {
  if (labels.size() != predicted.size()) throw Error(Errc::dimension_mismatch, "label/prediction length mismatch");
  if (labels.empty()) throw Error(Errc::empty_input, "no samples");
  std::set<int> classes(labels.begin(), labels.end());
  classes.insert(predicted.begin(), predicted.end());
  double total = 0.0;
  for (int c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool t = labels[i] == c, p = predicted[i] == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    const std::size_t denom = 2 * tp + fp + fn;
    total += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return total / static_cast<double>(classes.size());
}

struct ClassificationMetrics {
  double accuracy = 0.0;
  double auc = 0.0;  // NaN when no class has both positives and negatives
  double f1_macro = 0.0;
  std::size_t auc_classes = 0;
  bool degenerate = false;  // AUC undefined for this set
};

/// One-vs-rest macro AUC over score columns whose class has both positives
/// and negatives among `labels`. Column c of `scores` belongs to classes[c].
inline double macro_auc(std::span<const int> labels, const Matrix& scores, std::span<const int> classes,
                        std::size_t* used = nullptr) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size() ||
      static_cast<std::size_t>(scores.cols()) != classes.size()) {
    throw Error(Errc::dimension_mismatch, "score matrix does not match labels/classes");
  }
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> col(labels.size());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (std::size_t i = 0; i < labels.size(); ++i)
      col[i] = scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    const double a = binary_auc(col, labels, classes[c]);
    if (!std::isnan(a)) {
      total += a;
      ++count;
    }
  }
  if (used) *used = count;
  return count ? total / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

inline ClassificationMetrics classification_metrics(std::span<const int> labels, std::span<const int> predicted,
                                                    const Matrix& scores, std::span<const int> classes) {
  ClassificationMetrics m;
  m.accuracy = accuracy(labels, predicted);
  m.f1_macro = f1_macro(labels, predicted);
  m.auc = macro_auc(labels, scores, classes, &m.auc_classes);
  m.degenerate = std::isnan(m.auc);
  return m;
}

struct Aggregate {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();  // sample (n - 1) standard deviation
  std::size_t count = 0;    // finite values used
  std::size_t skipped = 0;  // NaN values (degenerate repeats)
};

inline Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  double sum = 0.0;
  for (double v : values) {
    if (std::isnan(v)) {
      ++a.skipped;
      continue;
    }
    sum += v;
    ++a.count;
  }
  if (a.count == 0) return a;
  a.mean = sum / static_cast<double>(a.count);
  double ss = 0.0;
  for (double v : values)
    if (!std::isnan(v)) ss += (v - a.mean) * (v - a.mean);
  a.sd = a.count > 1 ? std::sqrt(ss / static_cast<double>(a.count - 1)) : 0.0;
  return a;
}

}  // namespace geocpet
