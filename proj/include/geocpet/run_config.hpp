#pragma once

// Run configuration: a versioned JSON document, strictly validated.
//
// Defaults (every key is optional except "manifest"):
//
//   schema_version           1
//   manifest                 (required) path, relative to the config file
//   output_dir               "runs/latest", relative to the config file
//   task                     "classification" | "regression"
//   target                   "class_label" for classification, "ve_vco2" for regression
//   grouping.thresholds      per target: ve_vco2 [30], vo2_peak [25], vo2_pct_pred [50, 65, 85]
//   arms                     the five task rows (see classification_arms / regression_arms)
//   augmentation.beta_a/b    1, 1
//   augmentation.pair_policy within_class (classification), any_pair (regression)
//   augmentation.label_policy keep_first (classification), interpolate (regression)
//   augmentation.augment_factor 1
//   model.kernel             "rbf"; model.gamma null -> 1 / (dim * var)
//   model.C, model.epsilon, model.ridge   1, 0.1, 1
//   split.repeats, split.seed 100, 1
//   dataset.alignment        "r_aligned"; aligned_window_s 1; unaligned_window_s 2.5
//   dataset.shrinkage        0.05; dataset.lead 1; dataset.letter_mode "lists"
//   threads                  0 (all hardware threads)

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "geocpet/dataset.hpp"
#include "geocpet/error.hpp"
#include "geocpet/evaluation.hpp"

namespace geocpet {

inline constexpr int kRunConfigSchemaVersion = 1;

struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir;
  EvalConfig eval;
  std::vector<Arm> arms;
  DatasetOptions dataset;
};

namespace detail {

using nlohmann::json;

inline void config_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw Error(Errc::config_error, "'" + where + "' must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) {
      throw Error(Errc::config_error, "unknown key '" + (where.empty() ? k : where + "." + k) + "'");
    }
  }
}

inline std::string key_path(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

inline std::optional<double> cfg_number(const json& obj, const std::string& where, const std::string& key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw Error(Errc::config_error, "'" + key_path(where, key) + "' must be a number");
  return it->get<double>();
}

inline std::optional<std::int64_t> cfg_integer(const json& obj, const std::string& where, const std::string& key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) throw Error(Errc::config_error, "'" + key_path(where, key) + "' must be an integer");
  return it->get<std::int64_t>();
}

inline std::optional<std::string> cfg_string(const json& obj, const std::string& where, const std::string& key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(Errc::config_error, "'" + key_path(where, key) + "' must be a string");
  return it->get<std::string>();
}

template <class E>
E cfg_enum(const std::string& value, const std::string& key, std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, e] : options) {
    if (value == name) return e;
    names += names.empty() ? name : std::string(", ") + name;
  }
  throw Error(Errc::config_error, "'" + key + "' must be one of: " + names + " (got '" + value + "')");
}

inline Task parse_task(const std::string& s, const std::string& key = "task") {
  return cfg_enum<Task>(s, key, {{"classification", Task::classification}, {"regression", Task::regression}});
}

inline Target parse_target_key(const std::string& s, const std::string& key = "target") {
  const auto t = parse_target(s);
  if (!t) {
    throw Error(Errc::config_error,
                "'" + key + "' must be one of: class_label, ve_vco2, vo2_pct_pred, vo2_peak (got '" + s + "')");
  }
  return *t;
}

inline std::string to_string(PairPolicy p) { return p == PairPolicy::within_class ? "within_class" : "any_pair"; }
inline std::string to_string(LabelPolicy p) { return p == LabelPolicy::keep_first ? "keep_first" : "interpolate"; }

}  // namespace detail

/// Parses and validates a configuration. Relative paths resolve against `base_dir`.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  using namespace detail;
  config_keys(j, "", {"schema_version", "manifest", "output_dir", "task", "target", "grouping", "arms",
                      "augmentation", "model", "split", "dataset", "threads"});
  const auto version = cfg_integer(j, "", "schema_version");
  if (version && *version != kRunConfigSchemaVersion) {
    throw Error(Errc::config_error, "unsupported schema_version " + std::to_string(*version) + " (expected " +
                                        std::to_string(kRunConfigSchemaVersion) + ")");
  }

  RunConfig rc;
  const auto manifest = cfg_string(j, "", "manifest");
  if (!manifest) throw Error(Errc::config_error, "missing required key 'manifest'");
  rc.manifest = base_dir / *manifest;
  rc.output_dir = base_dir / cfg_string(j, "", "output_dir").value_or("runs/latest");

  auto& e = rc.eval;
  if (auto t = cfg_string(j, "", "task")) e.task = parse_task(*t);
  e.target = e.task == Task::regression ? Target::ve_vco2 : Target::class_label;
  if (auto t = cfg_string(j, "", "target")) e.target = parse_target_key(*t);
  if (e.target != Target::class_label) e.grouping = GroupingScheme::defaults(e.target);

  if (j.contains("grouping")) {
    const auto& g = j["grouping"];
    config_keys(g, "grouping", {"thresholds"});
    if (g.contains("thresholds")) {
      if (!g["thresholds"].is_array()) throw Error(Errc::config_error, "'grouping.thresholds' must be an array");
      e.grouping.thresholds.clear();
      for (const auto& v : g["thresholds"]) {
        if (!v.is_number()) throw Error(Errc::config_error, "'grouping.thresholds' must hold numbers");
        e.grouping.thresholds.push_back(v.get<double>());
      }
    }
  }

  if (j.contains("augmentation")) {
    const auto& a = j["augmentation"];
    const std::string w = "augmentation";
    config_keys(a, w, {"beta_a", "beta_b", "pair_policy", "label_policy", "augment_factor"});
    MixSpec m = e.resolved_mix();
    if (auto v = cfg_number(a, w, "beta_a")) m.beta_a = *v;
    if (auto v = cfg_number(a, w, "beta_b")) m.beta_b = *v;
    if (auto v = cfg_number(a, w, "augment_factor")) m.augment_factor = *v;
    if (auto v = cfg_string(a, w, "pair_policy")) {
      m.pair_policy = cfg_enum<PairPolicy>(
          *v, w + ".pair_policy", {{"within_class", PairPolicy::within_class}, {"any_pair", PairPolicy::any_pair}});
    }
    if (auto v = cfg_string(a, w, "label_policy")) {
      m.label_policy = cfg_enum<LabelPolicy>(
          *v, w + ".label_policy", {{"keep_first", LabelPolicy::keep_first}, {"interpolate", LabelPolicy::interpolate}});
    }
    if (e.task == Task::classification && m.label_policy == LabelPolicy::interpolate) {
      throw Error(Errc::config_error, "'augmentation.label_policy' interpolate needs numeric labels (regression)");
    }
    e.mix = m;
  }

  if (j.contains("model")) {
    const auto& m = j["model"];
    const std::string w = "model";
    config_keys(m, w, {"kernel", "gamma", "C", "epsilon", "ridge"});
    if (auto v = cfg_string(m, w, "kernel")) {
      e.model.kernel.kind = cfg_enum<KernelKind>(*v, "model.kernel", {{"rbf", KernelKind::rbf}, {"linear", KernelKind::linear}});
    }
    e.model.kernel.gamma = cfg_number(m, w, "gamma");
    if (e.model.kernel.kind == KernelKind::linear) e.model.kernel.gamma.reset();
    if (auto v = cfg_number(m, w, "C")) e.model.c = *v;
    if (auto v = cfg_number(m, w, "epsilon")) e.model.epsilon = *v;
    if (auto v = cfg_number(m, w, "ridge")) e.model.ridge = *v;
  }

  if (j.contains("split")) {
    const auto& s = j["split"];
    config_keys(s, "split", {"repeats", "seed"});
    if (auto v = cfg_integer(s, "split", "repeats")) {
      if (*v < 1) throw Error(Errc::config_error, "'split.repeats' must be >= 1");
      e.repeats = static_cast<std::size_t>(*v);
    }
    if (auto v = cfg_integer(s, "split", "seed")) {
      if (*v < 0) throw Error(Errc::config_error, "'split.seed' must be >= 0");
      e.seed = static_cast<std::uint64_t>(*v);
    }
  }

  if (auto v = cfg_integer(j, "", "threads")) {
    if (*v < 0) throw Error(Errc::config_error, "'threads' must be >= 0");
    e.threads = static_cast<unsigned>(*v);
  }

  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    const std::string w = "dataset";
    config_keys(d, w, {"alignment", "aligned_window_s", "unaligned_window_s", "shrinkage", "lead", "letter_mode"});
    auto& c = rc.dataset.covariance;
    if (auto v = cfg_string(d, w, "alignment")) {
      c.alignment = cfg_enum<Alignment>(*v, "dataset.alignment",
                                        {{"r_aligned", Alignment::r_aligned}, {"unaligned", Alignment::unaligned}});
    }
    if (auto v = cfg_number(d, w, "aligned_window_s")) c.aligned_window_s = *v;
    if (auto v = cfg_number(d, w, "unaligned_window_s")) c.unaligned_window_s = *v;
    if (auto v = cfg_number(d, w, "shrinkage")) c.shrinkage = *v;
    if (auto v = cfg_integer(d, w, "lead")) c.lead = static_cast<Eigen::Index>(*v);
    if (auto v = cfg_string(d, w, "letter_mode")) {
      rc.dataset.letter_mode =
          cfg_enum<LetterMode>(*v, "dataset.letter_mode", {{"lists", LetterMode::lists}, {"raw", LetterMode::raw}});
    }
    if (!(c.shrinkage >= 0.0 && c.shrinkage <= 1.0)) throw Error(Errc::config_error, "'dataset.shrinkage' must be in [0, 1]");
    if (!(c.aligned_window_s > 0.0) || !(c.unaligned_window_s > 0.0)) {
      throw Error(Errc::config_error, "dataset window lengths must be positive");
    }
    if (c.lead < 0) throw Error(Errc::config_error, "'dataset.lead' must be >= 0");
  }

  if (j.contains("arms")) {
    if (!j["arms"].is_array() || j["arms"].empty()) throw Error(Errc::config_error, "'arms' must be a non-empty array");
    for (std::size_t i = 0; i < j["arms"].size(); ++i) {
      const auto& a = j["arms"][i];
      const std::string w = "arms[" + std::to_string(i) + "]";
      config_keys(a, w, {"name", "input", "augmentation", "model"});
      Arm arm;
      const auto name = cfg_string(a, w, "name");
      if (!name) throw Error(Errc::config_error, "missing required key '" + w + ".name'");
      arm.name = *name;
      if (auto v = cfg_string(a, w, "input")) {
        arm.input = cfg_enum<InputMode>(
            *v, w + ".input", {{"baseline", InputMode::baseline}, {"ecg", InputMode::ecg}, {"fused", InputMode::fused}});
      }
      if (auto v = cfg_string(a, w, "augmentation")) {
        arm.augmentation = cfg_enum<AugmentMode>(*v, w + ".augmentation",
                                                 {{"none", AugmentMode::none},
                                                  {"covariance", AugmentMode::covariance},
                                                  {"simple", AugmentMode::simple}});
      }
      if (auto v = cfg_string(a, w, "model")) {
        arm.model = cfg_enum<ModelFamily>(*v, w + ".model", {{"svm", ModelFamily::svm}, {"linear_ls", ModelFamily::linear_ls}});
      }
      rc.arms.push_back(std::move(arm));
    }
  } else {
    rc.arms = e.task == Task::regression ? regression_arms() : classification_arms();
  }

  e.mix = e.resolved_mix();
  e.validate();
  std::set<std::string> names;
  for (const auto& a : rc.arms) {
    a.validate();
    if (!names.insert(a.name).second) throw Error(Errc::config_error, "duplicate arm name '" + a.name + "'");
  }
  return rc;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::config_error, path.string() + ": " + e.what());
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_json_file(path), path.parent_path());
}

/// Every setting made explicit, paths absolute. Parsing this document with
/// any base directory yields the same configuration.
inline nlohmann::json resolved_config_json(const RunConfig& rc) {
  using nlohmann::json;
  const auto& e = rc.eval;
  const MixSpec mix = e.resolved_mix();
  json arms = json::array();
  for (const auto& a : rc.arms) {
    arms.push_back({{"name", a.name},
                    {"input", to_string(a.input)},
                    {"augmentation", to_string(a.augmentation)},
                    {"model", to_string(a.model)}});
  }
  json j;
  j["schema_version"] = kRunConfigSchemaVersion;
  j["manifest"] = std::filesystem::absolute(rc.manifest).lexically_normal().string();
  j["output_dir"] = std::filesystem::absolute(rc.output_dir).lexically_normal().string();
  j["task"] = to_string(e.task);
  j["target"] = std::string(to_string(e.target));
  j["grouping"] = {{"thresholds", e.target == Target::class_label ? std::vector<double>{} : e.grouping.thresholds}};
  j["arms"] = arms;
  j["augmentation"] = {{"beta_a", mix.beta_a},
                       {"beta_b", mix.beta_b},
                       {"pair_policy", detail::to_string(mix.pair_policy)},
                       {"label_policy", detail::to_string(mix.label_policy)},
                       {"augment_factor", mix.augment_factor}};
  j["model"] = {{"kernel", e.model.kernel.kind == KernelKind::rbf ? "rbf" : "linear"},
                {"gamma", e.model.kernel.gamma ? json(*e.model.kernel.gamma) : json(nullptr)},
                {"C", e.model.c},
                {"epsilon", e.model.epsilon},
                {"ridge", e.model.ridge}};
  j["split"] = {{"repeats", e.repeats}, {"seed", e.seed}};
  const auto& c = rc.dataset.covariance;
  j["dataset"] = {{"alignment", c.alignment == Alignment::r_aligned ? "r_aligned" : "unaligned"},
                  {"aligned_window_s", c.aligned_window_s},
                  {"unaligned_window_s", c.unaligned_window_s},
                  {"shrinkage", c.shrinkage},
                  {"lead", c.lead},
                  {"letter_mode", rc.dataset.letter_mode == LetterMode::lists ? "lists" : "raw"}};
  j["threads"] = e.threads;
  return j;
}

}  // namespace geocpet
