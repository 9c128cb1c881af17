#pragma once

// Report files for an ablation run.
//
//   <out>/resolved_config.json     every setting, paths absolute
//   <out>/run_info.json            timestamps, elapsed time, thread count
//   <out>/<arm>/summary.json       aggregates, pooled metrics, config echo
//   <out>/<arm>/repeats.csv        one row per repeat
//   <out>/<arm>/predictions.csv    repeat, patient_id, actual, predicted
//
// summary.json and the CSVs depend only on (config, corpus, seed); anything
// time- or machine-dependent goes to run_info.json.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "geocpet/error.hpp"
#include "geocpet/evaluation.hpp"
#include "geocpet/run_config.hpp"
#include "geocpet/signal.hpp"

namespace geocpet {

namespace detail {

inline nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline std::string csv_number(double v) { return std::isnan(v) ? "" : format_double(v); }

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(Errc::io_error, "write failed: " + p.string());
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

/// Config echo for summaries: the resolved config without settings that do
/// not influence results (output location, thread count).
inline nlohmann::json result_config_json(const RunConfig& rc) {
  auto j = resolved_config_json(rc);
  j.erase("output_dir");
  j.erase("threads");
  return j;
}

inline nlohmann::json arm_summary_json(const ArmReport& rep, const AblationResult& res, const RunConfig& rc) {
  using nlohmann::json;
  const auto& names = metric_names(rep.task);
  json metrics = json::object(), pooled = json::object();
  for (std::size_t m = 0; m < names.size(); ++m) {
    const auto& a = rep.aggregates[m];
    metrics[names[m]] = {{"mean", detail::number_or_null(a.mean)},
                         {"sd", detail::number_or_null(a.sd)},
                         {"count", a.count},
                         {"skipped", a.skipped}};
    pooled[names[m]] = detail::number_or_null(rep.pooled[m]);
  }
  json j;
  j["arm"] = {{"name", rep.arm.name},
              {"input", to_string(rep.arm.input)},
              {"augmentation", to_string(rep.arm.augmentation)},
              {"model", to_string(rep.arm.model)}};
  j["task"] = to_string(rep.task);
  j["target"] = std::string(to_string(rc.eval.target));
  j["seed"] = res.plan.seed;
  j["repeats"] = rep.repeats.size();
  j["patients"] = res.patient_ids.size();
  j["excluded_patients"] = res.excluded;
  j["metrics"] = metrics;
  j["pooled"] = pooled;
  j["augmented_samples"] = rep.augmented_samples;
  j["degenerate_repeats"] = rep.degenerate_repeats;
  j["config"] = result_config_json(rc);
  return j;
}

inline std::string repeats_csv(const ArmReport& rep) {
  const auto& names = metric_names(rep.task);
  std::string s = "repeat,n_train,n_augmented,n_features,degenerate";
  for (const auto& n : names) s += "," + n;
  s += ",test_patients\n";
  for (const auto& r : rep.repeats) {
    s += std::to_string(r.repeat) + "," + std::to_string(r.n_train) + "," + std::to_string(r.n_augmented) + "," +
         std::to_string(r.n_features) + "," + (r.degenerate ? "1" : "0");
    for (double v : r.metrics) s += "," + detail::csv_number(v);
    s += ",";
    for (std::size_t i = 0; i < r.test_ids.size(); ++i) s += (i ? ";" : "") + r.test_ids[i];
    s += "\n";
  }
  return s;
}

inline std::string predictions_csv(const ArmReport& rep) {
  std::string s = "repeat,patient_id,actual,predicted\n";
  for (const auto& r : rep.repeats)
    for (const auto& p : r.predictions) {
      s += std::to_string(p.repeat) + "," + p.patient_id + "," + detail::csv_number(p.actual) + "," +
           detail::csv_number(p.predicted) + "\n";
    }
  return s;
}

inline void write_reports(const std::filesystem::path& out, const AblationResult& res, const RunConfig& rc) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw Error(Errc::io_error, "cannot create " + out.string() + ": " + ec.message());
  detail::write_file(out / "resolved_config.json", resolved_config_json(rc).dump(2) + "\n");
  for (const auto& rep : res.arms) {
    const auto dir = out / rep.arm.name;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(Errc::io_error, "cannot create " + dir.string() + ": " + ec.message());
    detail::write_file(dir / "summary.json", arm_summary_json(rep, res, rc).dump(2) + "\n");
    detail::write_file(dir / "repeats.csv", repeats_csv(rep));
    detail::write_file(dir / "predictions.csv", predictions_csv(rep));
  }
}

struct RunOutcome {
  AblationResult result;
  std::vector<std::string> warnings;
};

/// Loads the manifest, runs every arm and writes the report tree.
inline RunOutcome execute_run(const RunConfig& rc) {
  const auto started = std::chrono::system_clock::now();
  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome o;
  const Dataset ds = load_dataset(rc.manifest, rc.dataset, &o.warnings);
  o.result = run_ablation(ds, rc.arms, rc.eval);
  write_reports(rc.output_dir, o.result, rc);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::json info{{"started_at", detail::utc_timestamp(started)},
                      {"finished_at", detail::utc_timestamp(std::chrono::system_clock::now())},
                      {"elapsed_s", elapsed},
                      {"threads", rc.eval.threads ? rc.eval.threads : std::max(1u, std::thread::hardware_concurrency())},
                      {"warnings", o.warnings}};
  detail::write_file(rc.output_dir / "run_info.json", info.dump(2) + "\n");
  return o;
}

}  // namespace geocpet
