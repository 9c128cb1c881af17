#pragma once

// Covariance mixing augmentation. Each generated sample draws one alpha from a
// Beta distribution and uses it for both the covariance (a point on the
// geodesic between two parents) and the letter term vector (linear mix).

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geocpet/frechet_mean.hpp"
#include "geocpet/rng.hpp"
#include "geocpet/text.hpp"

namespace geocpet {

enum class PairPolicy { within_class, any_pair };
enum class LabelPolicy { keep_first, interpolate };

/// How the two parent covariances are combined.
enum class CovarianceMixing {
  riemannian,  // weighted Frechet mean, i.e. the geodesic point
  euclidean,   // (1 - alpha) C1 + alpha C2 entrywise ("simple" baseline)
};

struct MixSpec {
  double beta_a = 1.0;
  double beta_b = 1.0;
  PairPolicy pair_policy = PairPolicy::within_class;
  LabelPolicy label_policy = LabelPolicy::keep_first;
  double augment_factor = 1.0;  // new samples per (balanced) class member

  void validate() const {
    if (!(beta_a > 0.0) || !(beta_b > 0.0) || !std::isfinite(beta_a) || !std::isfinite(beta_b)) {
      throw Error(Errc::config_error, "beta parameters must be positive");
    }
    if (!(augment_factor >= 0.0) || !std::isfinite(augment_factor)) {
      throw Error(Errc::config_error, "augment_factor must be >= 0");
    }
  }

  static MixSpec classification_defaults() { return {}; }
  static MixSpec regression_defaults() {
    MixSpec s;
    s.pair_policy = PairPolicy::any_pair;
    s.label_policy = LabelPolicy::interpolate;
    return s;
  }
};

/// alpha ~ Beta(a, b), drawn as X / (X + Y) with X ~ Gamma(a), Y ~ Gamma(b).
inline double sample_alpha(const MixSpec& spec, Rng& rng) {
  std::gamma_distribution<double> ga(spec.beta_a, 1.0);
  std::gamma_distribution<double> gb(spec.beta_b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  if (!(x + y > 0.0)) return 0.5;
  return std::clamp(x / (x + y), 0.0, 1.0);
}

inline SpdMatrix mix_covariances(const SpdMatrix& c1, const SpdMatrix& c2, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::schema_error, "alpha outside [0, 1]");
  const std::vector<SpdMatrix> pair{c1, c2};
  return weighted_riemannian_mean(pair, WeightVector({1.0 - alpha, alpha})).mean;
}

inline SpdMatrix mix_covariances_euclidean(const SpdMatrix& c1, const SpdMatrix& c2,
                                           double alpha) {
  require_same_dim(c1.dim(), c2.dim());
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::schema_error, "alpha outside [0, 1]");
  return SpdMatrix((1.0 - alpha) * c1.values() + alpha * c2.values());
}

/// One original training sample. `group` is the class used for pairing and
/// balancing; `label` is the prediction target.
struct MixSource {
  SpdMatrix cov;
  std::optional<TermVector> letter;
  double label = 0.0;
  int group = 0;
};

struct AugmentedSample {
  SpdMatrix cov;
  std::optional<TermVector> letter;
  double label = 0.0;
  int group = 0;
  double alpha_used = 0.0;
  std::pair<std::size_t, std::size_t> parent_ids;
};

/// Number of samples generated per group: first every group is topped up to
/// the largest group's size, then round(augment_factor * largest) more each.
/// augment_factor == 0 generates nothing.
inline std::map<int, std::pair<std::size_t, std::size_t>> augmentation_plan(
    std::span<const MixSource> samples, double augment_factor) {
  std::map<int, std::size_t> counts;
  for (const auto& s : samples) ++counts[s.group];
  std::map<int, std::pair<std::size_t, std::size_t>> plan;
  if (augment_factor <= 0.0 || counts.empty()) return plan;
  std::size_t largest = 0;
  for (const auto& [g, c] : counts) largest = std::max(largest, c);
  const auto extra = static_cast<std::size_t>(std::llround(augment_factor * static_cast<double>(largest)));
  for (const auto& [g, c] : counts) plan[g] = {largest - c, extra};
  return plan;
}

inline std::vector<AugmentedSample> augment_dataset(std::span<const MixSource> samples,
                                                    const MixSpec& spec, Rng& rng,
                                                    CovarianceMixing mixing = CovarianceMixing::riemannian) {
  spec.validate();
  const auto plan = augmentation_plan(samples, spec.augment_factor);
  std::vector<AugmentedSample> out;
  if (plan.empty()) return out;

  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < samples.size(); ++i) members[samples[i].group].push_back(i);
  for (const auto& [g, idx] : members) {
    if (spec.pair_policy == PairPolicy::within_class && idx.size() < 2) {
      throw Error(Errc::class_too_small,
                  "class " + std::to_string(g) + " has " + std::to_string(idx.size()) +
                      " member(s); within-class mixing needs 2");
    }
  }
  if (spec.pair_policy == PairPolicy::any_pair && samples.size() < 2) {
    throw Error(Errc::class_too_small, "mixing needs at least 2 samples");
  }

  auto generate = [&](int group) {
    const auto& pool = members.at(group);
    const double alpha = sample_alpha(spec, rng);
    std::uniform_int_distribution<std::size_t> pick_first(0, pool.size() - 1);
    const std::size_t a = pool[pick_first(rng)];
    std::size_t b = a;
    if (spec.pair_policy == PairPolicy::within_class) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 2);
      std::size_t j = pool[pick(rng)];
      if (j == a) j = pool.back();
      b = j;
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 2);
      std::size_t j = pick(rng);
      if (j >= a) ++j;
      b = j;
    }
    const MixSource& p1 = samples[a];
    const MixSource& p2 = samples[b];
    SpdMatrix cov = mixing == CovarianceMixing::riemannian
                        ? mix_covariances(p1.cov, p2.cov, alpha)
                        : mix_covariances_euclidean(p1.cov, p2.cov, alpha);
    std::optional<TermVector> letter;
    if (p1.letter && p2.letter) letter = mix_term_vectors(*p1.letter, *p2.letter, alpha);
    const double label = spec.label_policy == LabelPolicy::interpolate
                             ? p1.label + alpha * (p2.label - p1.label)
                             : p1.label;
    out.push_back(AugmentedSample{std::move(cov), std::move(letter), label, p1.group, alpha, {a, b}});
  };

  for (const auto& [g, counts] : plan)
    for (std::size_t k = 0; k < counts.first; ++k) generate(g);
  for (const auto& [g, counts] : plan)
    for (std::size_t k = 0; k < counts.second; ++k) generate(g);
  return out;
}

}  // namespace geocpet
