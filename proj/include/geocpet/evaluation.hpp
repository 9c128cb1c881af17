#pragma once

// Stratified patient leave-out splits and the ablation driver.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "geocpet/augmentation.hpp"
#include "geocpet/dataset.hpp"
#include "geocpet/error.hpp"
#include "geocpet/frechet_mean.hpp"
#include "geocpet/metrics.hpp"
#include "geocpet/models.hpp"
#include "geocpet/rng.hpp"
#include "geocpet/spd.hpp"
#include "geocpet/text.hpp"

namespace geocpet {

// ---------------------------------------------------------------------------
// Splits

struct SplitRepeat {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // one per stratum, in stratum order
};

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<SplitRepeat> repeats;
};

/// `strata[i]` is the class of sample i. Repeat k draws one test sample per
/// class from an RNG seeded with derive_seed(seed, k).
inline SplitPlan make_splits(std::span<const int> strata, std::size_t repeats, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < strata.size(); ++i) members[strata[i]].push_back(i);
  for (const auto& [c, idx] : members) {
    if (idx.size() < 2) {
      throw Error(Errc::class_too_small, "class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                                             " patient(s); leave-out splits need 2");
    }
  }
  SplitPlan plan;
  plan.seed = seed;
  plan.repeats.reserve(repeats);
  for (std::size_t k = 0; k < repeats; ++k) {
    Rng rng(derive_seed(seed, k));
    SplitRepeat r;
    std::vector<char> in_test(strata.size(), 0);
    for (const auto& [c, idx] : members) {
      std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
      const std::size_t t = idx[pick(rng)];
      r.test.push_back(t);
      in_test[t] = 1;
    }
    for (std::size_t i = 0; i < strata.size(); ++i)
      if (!in_test[i]) r.train.push_back(i);
    plan.repeats.push_back(std::move(r));
  }
  return plan;
}

inline SplitPlan make_splits(const Dataset& ds, std::size_t repeats, std::uint64_t seed) {
  std::vector<int> strata;
  strata.reserve(ds.patients.size());
  for (const auto& p : ds.patients) strata.push_back(p.class_index);
  return make_splits(strata, repeats, seed);
}

// ---------------------------------------------------------------------------
// Arms and configuration

enum class Task { regression, classification };
enum class InputMode { baseline, ecg, fused };
enum class AugmentMode { none, covariance, simple };
enum class ModelFamily { svm, linear_ls };

inline std::string to_string(Task t) { return t == Task::regression ? "regression" : "classification"; }
inline std::string to_string(InputMode m) {
  switch (m) {
    case InputMode::baseline: return "baseline";
    case InputMode::ecg: return "ecg";
    case InputMode::fused: return "fused";
  }
  return "?";
}
inline std::string to_string(AugmentMode m) {
  switch (m) {
    case AugmentMode::none: return "none";
    case AugmentMode::covariance: return "covariance";
    case AugmentMode::simple: return "simple";
  }
  return "?";
}
inline std::string to_string(ModelFamily m) { return m == ModelFamily::svm ? "svm" : "linear_ls"; }

struct Arm {
  std::string name;
  InputMode input = InputMode::fused;
  AugmentMode augmentation = AugmentMode::none;
  ModelFamily model = ModelFamily::svm;

  void validate() const {
    if (name.empty()) throw Error(Errc::config_error, "arm name must not be empty");
    for (char ch : name) {
      if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.')) {
        throw Error(Errc::config_error, "arm name '" + name + "' may only use [A-Za-z0-9_.-]");
      }
    }
    if (input == InputMode::baseline && augmentation != AugmentMode::none) {
      throw Error(Errc::config_error, "arm '" + name + "': baseline features cannot be augmented");
    }
  }
};

/// The five rows of the classification ablation: ECG alone, ECG with covariance
/// mixing, fused, fused with Euclidean ("simple") mixing, fused with covariance mixing.
inline std::vector<Arm> classification_arms() {
  return {{"ecg", InputMode::ecg, AugmentMode::none, ModelFamily::svm},
          {"ecg_covariance", InputMode::ecg, AugmentMode::covariance, ModelFamily::svm},
          {"fused", InputMode::fused, AugmentMode::none, ModelFamily::svm},
          {"fused_simple", InputMode::fused, AugmentMode::simple, ModelFamily::svm},
          {"fused_covariance", InputMode::fused, AugmentMode::covariance, ModelFamily::svm}};
}

/// Regression rows: baseline features under both models, then tangent inputs.
inline std::vector<Arm> regression_arms() {
  return {{"baseline_linear_ls", InputMode::baseline, AugmentMode::none, ModelFamily::linear_ls},
          {"baseline_svm", InputMode::baseline, AugmentMode::none, ModelFamily::svm},
          {"ecg", InputMode::ecg, AugmentMode::none, ModelFamily::svm},
          {"fused", InputMode::fused, AugmentMode::none, ModelFamily::svm},
          {"fused_covariance", InputMode::fused, AugmentMode::covariance, ModelFamily::svm}};
}

struct ModelSettings {
  KernelSpec kernel;
  double c = 1.0;
  double epsilon = 0.1;
  double ridge = 1.0;

  void validate() const {
    kernel.validate();
    if (!(c > 0.0) || !std::isfinite(c)) throw Error(Errc::config_error, "C must be positive");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw Error(Errc::config_error, "epsilon must be >= 0");
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw Error(Errc::config_error, "ridge must be >= 0");
  }
};

struct EvalConfig {
  Task task = Task::classification;
  Target target = Target::class_label;
  GroupingScheme grouping = GroupingScheme::defaults(Target::ve_vco2);  // classification of CPET targets
  std::optional<MixSpec> mix;  // empty: task defaults
  ModelSettings model;
  std::size_t repeats = 100;
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0: hardware concurrency

  void validate() const {
    if (task == Task::regression && target == Target::class_label) {
      throw Error(Errc::config_error, "regression needs a CPET target, not class_label");
    }
    if (task == Task::classification && target != Target::class_label) {
      if (grouping.target != target) {
        throw Error(Errc::config_error, "grouping scheme is for " + std::string(to_string(grouping.target)) +
                                            ", target is " + std::string(to_string(target)));
      }
      grouping.validate();
    }
    resolved_mix().validate();
    model.validate();
    if (repeats < 1) throw Error(Errc::config_error, "repeats must be >= 1");
  }

  MixSpec resolved_mix() const {
    if (mix) return *mix;
    return task == Task::regression ? MixSpec::regression_defaults() : MixSpec::classification_defaults();
  }
};

// ---------------------------------------------------------------------------
// Results

inline const std::vector<std::string>& metric_names(Task t) {
  static const std::vector<std::string> reg{"r2", "adjusted_r2", "rmse", "pearson_r"};
  static const std::vector<std::string> cls{"accuracy", "auc", "f1_macro"};
  return t == Task::regression ? reg : cls;
}

struct PredictionRow {
  std::size_t repeat = 0;
  std::string patient_id;
  double actual = 0.0;
  double predicted = 0.0;
};

struct RepeatResult {
  std::size_t repeat = 0;
  std::vector<std::string> test_ids;
  std::size_t n_train = 0;
  std::size_t n_augmented = 0;
  std::size_t n_features = 0;
  std::vector<double> metrics;  // ordered as metric_names(task); NaN when undefined
  bool degenerate = false;
  std::vector<PredictionRow> predictions;
};

struct ArmReport {
  Arm arm;
  Task task = Task::classification;
  std::vector<RepeatResult> repeats;
  std::vector<Aggregate> aggregates;     // per metric over repeats
  std::vector<double> pooled;            // per metric over all test predictions
  std::size_t augmented_samples = 0;     // AugmentedSample objects constructed in total
  std::size_t degenerate_repeats = 0;
};

struct AblationResult {
  SplitPlan plan;
  std::vector<std::string> patient_ids;  // patients that entered the plan, in dataset order
  std::vector<std::string> excluded;     // patients lacking the configured target
  std::vector<ArmReport> arms;
};

namespace detail {

/// Value of `f` or NaN when the metric is undefined for this set.
template <class F>
double metric_or_nan(F&& f, bool& degenerate) {
  try {
    return f();
  } catch (const Error& e) {
    switch (e.code()) {
      case Errc::degenerate_target:
      case Errc::degenerate_input:
      case Errc::insufficient_samples:
        degenerate = true;
        return std::numeric_limits<double>::quiet_NaN();
      default:
        throw;
    }
  }
}

inline std::vector<double> regression_metrics(const std::vector<double>& y, const std::vector<double>& yhat,
                                              std::size_t n_features, bool& degenerate) {
  const double r = metric_or_nan([&] { return r2(y, yhat); }, degenerate);
  // Adjusted R^2 is only defined when there are more samples than features + 1.
  double adj = std::numeric_limits<double>::quiet_NaN();
  if (!std::isnan(r) && y.size() > n_features + 1) adj = adjusted_r2(r, y.size(), n_features);
  const double e = metric_or_nan([&] { return rmse(y, yhat); }, degenerate);
  const double p = metric_or_nan([&] { return pearson_r(y, yhat); }, degenerate);
  return {r, adj, e, p};
}

struct EvalSample {
  std::size_t index = 0;  // into the filtered patient list
  double label = 0.0;     // regression value or class id
  int group = 0;          // balancing/pairing group
};

/// Everything a repeat shares across arms: the training reference point, the
/// fold vocabulary, and per-patient tangent and term vectors.
struct RepeatContext {
  std::optional<ReferencePoint> reference;
  std::optional<Vocabulary> vocab;
  std::vector<TangentVector> tangent;             // indexed like the filtered patients
  std::vector<std::optional<TermVector>> terms;   // same
};

inline Vector baseline_row(const BaselineFeatures& b, const Vector& fill) {
  Vector v(3);
  v(0) = b.ventricular_rate_bpm.value_or(fill(0));
  v(1) = b.qrs_duration_ms.value_or(fill(1));
  v(2) = b.pr_interval_ms.value_or(fill(2));
  return v;
}

struct Evaluator {
  const std::vector<const PatientData*>& patients;
  const std::vector<EvalSample>& samples;
  const EvalConfig& cfg;
  const MixSpec& mix;
  const std::vector<Arm>& arms;
  bool need_tangent = false;
  bool need_terms = false;

  RepeatContext context(const SplitRepeat& split, int fold) const {
    RepeatContext ctx;
    if (need_tangent) {
      std::vector<SpdMatrix> train;
      train.reserve(split.train.size());
      for (std::size_t i : split.train) train.push_back(patients[i]->covariance);
      ctx.reference.emplace(unweighted_riemannian_mean(train));
      ctx.tangent.resize(patients.size());
      for (std::size_t i : split.train) ctx.tangent[i] = tangent_project(*ctx.reference, patients[i]->covariance);
      for (std::size_t i : split.test) ctx.tangent[i] = tangent_project(*ctx.reference, patients[i]->covariance);
    }
    if (need_terms) {
      std::vector<Tokens> docs;
      for (std::size_t i : split.train)
        if (patients[i]->letter_tokens) docs.push_back(*patients[i]->letter_tokens);
      ctx.vocab.emplace(build_vocabulary(docs, fold));
      ctx.terms.resize(patients.size());
      auto vec = [&](std::size_t i) {
        static const Tokens empty;
        ctx.terms[i] = vectorize(patients[i]->letter_tokens ? *patients[i]->letter_tokens : empty, *ctx.vocab);
      };
      for (std::size_t i : split.train) vec(i);
      for (std::size_t i : split.test) vec(i);
    }
    return ctx;
  }

  RepeatResult run_arm(const Arm& arm, const SplitRepeat& split, const RepeatContext& ctx, int fold,
                       std::size_t& augmented_counter) const {
    const bool classify = cfg.task == Task::classification;
    RepeatResult res;
    res.repeat = static_cast<std::size_t>(fold);
    res.n_train = split.train.size();

    // Raw (unscaled) feature rows for training originals and test patients.
    std::vector<Vector> train_rows, test_rows;
    std::vector<double> train_labels;
    if (arm.input == InputMode::baseline) {
      // Missing baseline fields are imputed with the training-fold mean.
      Vector sum = Vector::Zero(3), count = Vector::Zero(3);
      for (std::size_t i : split.train) {
        const auto& b = patients[i]->baseline;
        const std::optional<double> f[3] = {b.ventricular_rate_bpm, b.qrs_duration_ms, b.pr_interval_ms};
        for (int j = 0; j < 3; ++j)
          if (f[j]) {
            sum(j) += *f[j];
            count(j) += 1.0;
          }
      }
      Vector fill(3);
      for (int j = 0; j < 3; ++j) fill(j) = count(j) > 0 ? sum(j) / count(j) : 0.0;
      for (std::size_t i : split.train) train_rows.push_back(baseline_row(patients[i]->baseline, fill));
      for (std::size_t i : split.test) test_rows.push_back(baseline_row(patients[i]->baseline, fill));
    } else {
      const bool fused = arm.input == InputMode::fused;
      for (std::size_t i : split.train)
        train_rows.push_back(concat_features(ctx.tangent[i], fused ? ctx.terms[i] : std::nullopt));
      for (std::size_t i : split.test)
        test_rows.push_back(concat_features(ctx.tangent[i], fused ? ctx.terms[i] : std::nullopt));
    }
    for (std::size_t i : split.train) train_labels.push_back(samples[i].label);

    // Scaler statistics come from the training originals only.
    const auto d = static_cast<Eigen::Index>(train_rows.front().size());
    Matrix originals(static_cast<Eigen::Index>(train_rows.size()), d);
    for (std::size_t r = 0; r < train_rows.size(); ++r) originals.row(static_cast<Eigen::Index>(r)) = train_rows[r];
    const Standardizer scaler = Standardizer::fit(originals, fold);

    if (arm.augmentation != AugmentMode::none) {
      std::vector<MixSource> sources;
      sources.reserve(split.train.size());
      const bool fused = arm.input == InputMode::fused;
      for (std::size_t i : split.train) {
        sources.push_back(MixSource{patients[i]->covariance, fused ? ctx.terms[i] : std::nullopt, samples[i].label,
                                    samples[i].group});
      }
      // Shared across arms of a repeat: identical pairs and alphas, only the mixing rule differs.
      Rng rng(derive_seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(fold)), 1));
      const auto mixing =
          arm.augmentation == AugmentMode::covariance ? CovarianceMixing::riemannian : CovarianceMixing::euclidean;
      const auto generated = augment_dataset(sources, mix, rng, mixing);
      augmented_counter += generated.size();
      res.n_augmented = generated.size();
      for (const auto& g : generated) {
        train_rows.push_back(concat_features(tangent_project(*ctx.reference, g.cov), g.letter));
        train_labels.push_back(g.label);
      }
    }

    Matrix x(static_cast<Eigen::Index>(train_rows.size()), d);
    for (std::size_t r = 0; r < train_rows.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = train_rows[r];
    x = scaler.transform_rows(x, fold);
    Matrix xt(static_cast<Eigen::Index>(test_rows.size()), d);
    for (std::size_t r = 0; r < test_rows.size(); ++r) xt.row(static_cast<Eigen::Index>(r)) = test_rows[r];
    xt = scaler.transform_rows(xt, fold);
    res.n_features = static_cast<std::size_t>(d);

    const auto& m = cfg.model;
    TrainedModel model;
    std::vector<double> actual;
    for (std::size_t i : split.test) actual.push_back(samples[i].label);
    if (classify) {
      std::vector<int> labels(train_labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(std::lround(train_labels[i]));
      model = arm.model == ModelFamily::svm ? fit_svc(x, labels, m.c, m.kernel)
                                            : fit_linear_ls_classifier(x, labels, m.ridge);
      const auto pred = predict(model, xt);
      std::vector<int> truth(actual.size());
      for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(std::lround(actual[i]));
      const auto cm = classification_metrics(truth, pred.labels, pred.scores, model.classes);
      res.metrics = {cm.accuracy, cm.auc, cm.f1_macro};
      res.degenerate = cm.degenerate;
      for (std::size_t r = 0; r < split.test.size(); ++r) {
        res.predictions.push_back({res.repeat, patients[split.test[r]]->patient_id, actual[r],
                                   static_cast<double>(pred.labels[r])});
      }
    } else {
      // Targets are z-scored with the training originals' statistics so that C
      // and epsilon mean the same thing for every target; predictions are mapped back.
      const std::size_t n_orig = split.train.size();
      double mu = 0.0, ss = 0.0;
      for (std::size_t i = 0; i < n_orig; ++i) mu += train_labels[i];
      mu /= static_cast<double>(n_orig);
      for (std::size_t i = 0; i < n_orig; ++i) ss += (train_labels[i] - mu) * (train_labels[i] - mu);
      double sd = n_orig > 1 ? std::sqrt(ss / static_cast<double>(n_orig - 1)) : 0.0;
      if (!(sd > 0.0)) sd = 1.0;
      Vector y(static_cast<Eigen::Index>(train_labels.size()));
      for (std::size_t i = 0; i < train_labels.size(); ++i)
        y(static_cast<Eigen::Index>(i)) = (train_labels[i] - mu) / sd;
      model = arm.model == ModelFamily::svm ? fit_svr(x, y, m.c, m.epsilon, m.kernel) : fit_linear_ls(x, y, m.ridge);
      const auto pred = predict(model, xt);
      std::vector<double> yhat(pred.values.size());
      for (std::size_t i = 0; i < yhat.size(); ++i) yhat[i] = mu + sd * pred.values(static_cast<Eigen::Index>(i));
      res.metrics = regression_metrics(actual, yhat, res.n_features, res.degenerate);
      for (std::size_t r = 0; r < split.test.size(); ++r)
        res.predictions.push_back({res.repeat, patients[split.test[r]]->patient_id, actual[r], yhat[r]});
    }
    for (std::size_t i : split.test) res.test_ids.push_back(patients[i]->patient_id);
    return res;
  }
};

/// Metrics recomputed over every test prediction of every repeat.
inline std::vector<double> pooled_metrics(const ArmReport& rep, Task task) {
  std::vector<double> actual, predicted;
  for (const auto& r : rep.repeats)
    for (const auto& p : r.predictions) {
      actual.push_back(p.actual);
      predicted.push_back(p.predicted);
    }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (actual.empty()) return std::vector<double>(metric_names(task).size(), nan);
  bool degenerate = false;
  if (task == Task::regression) {
    const std::size_t p = rep.repeats.empty() ? 0 : rep.repeats.front().n_features;
    return regression_metrics(actual, predicted, p, degenerate);
  }
  // Pooled AUC needs scores, which are not comparable across repeat models.
  std::vector<int> a(actual.size()), b(predicted.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = static_cast<int>(std::lround(actual[i]));
    b[i] = static_cast<int>(std::lround(predicted[i]));
  }
  return {accuracy(a, b), nan, f1_macro(a, b)};
}

}  // namespace detail

/// Runs every arm over the plan. `plan` indexes `eligible` patients, i.e. the
/// dataset patients that carry the configured target, in dataset order.
inline AblationResult run_ablation(const Dataset& ds, const std::vector<Arm>& arms, const EvalConfig& cfg,
                                   const std::optional<SplitPlan>& given_plan = std::nullopt) {
  cfg.validate();
  if (arms.empty()) throw Error(Errc::config_error, "no arms configured");
  {
    std::vector<std::string> names;
    for (const auto& a : arms) {
      a.validate();
      names.push_back(a.name);
    }
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
      throw Error(Errc::config_error, "duplicate arm name");
  }

  AblationResult out;
  std::vector<const PatientData*> patients;
  std::vector<detail::EvalSample> samples;
  std::vector<int> strata;
  for (const auto& p : ds.patients) {
    double label = 0.0;
    if (cfg.target == Target::class_label) {
      label = p.class_index;
    } else {
      const auto v = p.targets.get(cfg.target);
      if (!v) {
        out.excluded.push_back(p.patient_id);
        continue;
      }
      label = cfg.task == Task::regression ? *v : static_cast<double>(group_target(v, cfg.grouping));
    }
    const int group = cfg.task == Task::classification ? static_cast<int>(std::lround(label)) : p.class_index;
    samples.push_back({patients.size(), label, group});
    patients.push_back(&p);
    strata.push_back(p.class_index);
    out.patient_ids.push_back(p.patient_id);
  }
  if (patients.empty()) throw Error(Errc::empty_input, "no patient carries target " + std::string(to_string(cfg.target)));

  out.plan = given_plan ? *given_plan : make_splits(strata, cfg.repeats, cfg.seed);
  for (const auto& r : out.plan.repeats)
    for (const auto* part : {&r.train, &r.test})
      for (std::size_t i : *part)
        if (i >= patients.size()) throw Error(Errc::dimension_mismatch, "split plan indexes past the cohort");

  const MixSpec mix = cfg.resolved_mix();
  detail::Evaluator ev{patients, samples, cfg, mix, arms};
  for (const auto& a : arms) {
    ev.need_tangent |= a.input != InputMode::baseline;
    ev.need_terms |= a.input == InputMode::fused;
  }

  const std::size_t n_rep = out.plan.repeats.size();
  std::vector<std::vector<RepeatResult>> results(arms.size(), std::vector<RepeatResult>(n_rep));
  std::vector<std::vector<std::size_t>> counters(arms.size(), std::vector<std::size_t>(n_rep, 0));
  std::vector<std::exception_ptr> errors(n_rep);

  auto work = [&](std::size_t k) {
    const auto& split = out.plan.repeats[k];
    const int fold = static_cast<int>(k);
    std::size_t a = 0;
    try {
      const auto ctx = ev.context(split, fold);
      for (a = 0; a < arms.size(); ++a) results[a][k] = ev.run_arm(arms[a], split, ctx, fold, counters[a][k]);
    } catch (const Error& e) {
      const std::string where = a < arms.size() ? ", arm '" + arms[a].name + "'" : "";
      std::string msg = e.what();
      const std::string prefix = std::string(to_string(e.code())) + ": ";
      if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
      errors[k] = std::make_exception_ptr(Error(e.code(), "repeat " + std::to_string(k) + where + ": " + msg));
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };

  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_rep));
  if (threads <= 1) {
    for (std::size_t k = 0; k < n_rep; ++k) {
      work(k);
      if (errors[k]) break;
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t k; !failed && (k = next.fetch_add(1)) < n_rep;) {
          work(k);
          if (errors[k]) failed = true;
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  // Report the lowest failing repeat so the error does not depend on scheduling.
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  const auto& names = metric_names(cfg.task);
  for (std::size_t a = 0; a < arms.size(); ++a) {
    ArmReport rep;
    rep.arm = arms[a];
    rep.task = cfg.task;
    rep.repeats = std::move(results[a]);
    for (std::size_t k = 0; k < n_rep; ++k) {
      rep.augmented_samples += counters[a][k];
      rep.degenerate_repeats += rep.repeats[k].degenerate;
    }
    for (std::size_t m = 0; m < names.size(); ++m) {
      std::vector<double> v;
      for (const auto& r : rep.repeats) v.push_back(r.metrics[m]);
      rep.aggregates.push_back(aggregate(v));
    }
    rep.pooled = detail::pooled_metrics(rep, cfg.task);
    out.arms.push_back(std::move(rep));
  }
  return out;
}

}  // namespace geocpet
