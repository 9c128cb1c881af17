#pragma once

// Command-line front end: synth, run, inspect.
//
// Exit codes: 0 ok, 2 bad flags or config, 3 IO failure, 4 data error,
// 5 numerical failure. NO_COLOR suppresses colored error prefixes.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "geocpet/dataset.hpp"
#include "geocpet/error.hpp"
#include "geocpet/evaluation.hpp"
#include "geocpet/metrics.hpp"
#include "geocpet/report.hpp"
#include "geocpet/run_config.hpp"
#include "geocpet/synth.hpp"

namespace geocpet::cli {

enum ExitCode : int { ok = 0, usage = 2, io = 3, data = 4, numerical = 5 };

inline int exit_code_for(Errc c) {
  if (c == Errc::config_error) return usage;
  if (c == Errc::io_error) return io;
  if (is_numerical(c)) return numerical;
  return data;
}

inline bool use_color(std::ostream& err) {
  if (std::getenv("NO_COLOR")) return false;
  return &err == &std::cerr && isatty(STDERR_FILENO);
}

inline int report_error(std::ostream& err, const Error& e) {
  const bool color = use_color(err);
  err << (color ? "\033[31merror\033[0m" : "error") << ": " << e.what() << "\n";
  return exit_code_for(e.code());
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  SynthSpec spec;
  std::string out;
  bool force = false;
};

inline void add_synth_options(CLI::App& cmd, SynthOptions& o) {
  auto& s = o.spec;
  cmd.add_option("--out", o.out, "Output directory")->required();
  cmd.add_flag("--force", o.force, "Write into a non-empty directory");
  cmd.add_option("--classes", s.n_classes, "Number of classes")->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--patients", s.patients_per_class, "Patients per class")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd.add_option("--class-sizes", s.class_sizes, "Per-class patient counts (overrides --patients)")->delimiter(',');
  cmd.add_option("--channels", s.channels, "Leads per recording")->capture_default_str();
  cmd.add_option("--sample-rate", s.sample_rate_hz, "Sampling rate in Hz")->capture_default_str();
  cmd.add_option("--beats", s.beats_per_record, "Beats per recording")->capture_default_str();
  cmd.add_option("--separation", s.class_separation, "Geodesic distance between class centers")
      ->capture_default_str();
  cmd.add_option("--spread", s.patient_spread, "Patient distance from the class center")->capture_default_str();
  cmd.add_option("--target-noise", s.target_noise, "Target noise sd")->capture_default_str();
  cmd.add_option("--letter-effect", s.letter_effect, "Target shift per letter modifier pool")->capture_default_str();
  cmd.add_flag("--shared-letters", s.shared_letters, "Letters carry no class information");
  cmd.add_option("--seed", s.seed, "Random seed")->capture_default_str();
}

inline int cmd_synth(SynthOptions o, std::ostream& out, std::ostream& err) {
  try {
    if (!o.spec.class_sizes.empty()) o.spec.n_classes = static_cast<int>(o.spec.class_sizes.size());
    o.spec.validate();
    const auto corpus = generate_corpus(o.spec);
    write_corpus(corpus, o.out, o.force);
    out << "wrote " << corpus.patients.size() << " patients in " << o.spec.sizes().size() << " classes to "
        << o.out << "\n";
    return ok;
  } catch (const Error& e) {
    return report_error(err, e);
  }
}

// ---------------------------------------------------------------------------
// run

struct RunOverrides {
  std::string config;
  std::optional<std::string> manifest, out, task, target;
  std::optional<std::int64_t> repeats, seed, threads;
};

inline void add_run_options(CLI::App& cmd, RunOverrides& o) {
  cmd.add_option("config", o.config, "Run configuration (JSON)")->required();
  cmd.add_option("--manifest", o.manifest, "Override 'manifest'");
  cmd.add_option("--out", o.out, "Override 'output_dir'");
  cmd.add_option("--task", o.task, "Override 'task'");
  cmd.add_option("--target", o.target, "Override 'target'");
  cmd.add_option("--repeats", o.repeats, "Override 'split.repeats'");
  cmd.add_option("--seed", o.seed, "Override 'split.seed'");
  cmd.add_option("--threads", o.threads, "Override 'threads'");
}

/// Reads the config file and applies flag overrides. Override paths are
/// relative to the working directory, file paths to the config's directory.
inline RunConfig resolve_run_config(const RunOverrides& o) {
  const std::filesystem::path path(o.config);
  nlohmann::json j = read_json_file(path);
  if (!j.is_object()) throw Error(Errc::config_error, "config must be a JSON object");
  const auto base = path.parent_path();
  auto abs = [](const std::string& p) { return std::filesystem::absolute(p).lexically_normal().string(); };
  if (o.manifest) j["manifest"] = abs(*o.manifest);
  if (o.out) j["output_dir"] = abs(*o.out);
  if (o.task) j["task"] = *o.task;
  if (o.target) j["target"] = *o.target;
  if (o.repeats || o.seed) {
    if (!j.contains("split")) j["split"] = nlohmann::json::object();
    if (o.repeats) j["split"]["repeats"] = *o.repeats;
    if (o.seed) j["split"]["seed"] = *o.seed;
  }
  if (o.threads) j["threads"] = *o.threads;
  return parse_run_config(j, base);
}

inline std::string format_metric(const Aggregate& a) {
  if (a.count == 0) return "-";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(3) << a.mean << " +- " << a.sd;
  return ss.str();
}

inline void print_run_table(const AblationResult& res, Task task, std::ostream& out) {
  const auto& names = metric_names(task);
  out << std::left << std::setw(22) << "arm";
  for (const auto& n : names) out << std::setw(20) << n;
  out << "augmented\n";
  for (const auto& a : res.arms) {
    out << std::setw(22) << a.arm.name;
    for (const auto& g : a.aggregates) out << std::setw(20) << format_metric(g);
    out << a.augmented_samples << "\n";
  }
}

inline int cmd_run(const RunOverrides& o, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  try {
    rc = resolve_run_config(o);
  } catch (const Error& e) {
    return report_error(err, e);
  }
  try {
    const auto outcome = execute_run(rc);
    for (const auto& w : outcome.warnings) err << "warning: " << w << "\n";
    out << outcome.result.patient_ids.size() << " patients, " << rc.eval.repeats << " repeats, target "
        << to_string(rc.eval.target) << " (" << to_string(rc.eval.task) << ")\n";
    print_run_table(outcome.result, rc.eval.task, out);
    out << "reports written to " << rc.output_dir.string() << "\n";
    return ok;
  } catch (const Error& e) {
    // Config-shaped problems discovered while running are data problems here
    // (the file itself was valid).
    const int code = report_error(err, e);
    return e.code() == Errc::config_error ? data : code;
  }
}

// ---------------------------------------------------------------------------
// inspect

inline std::string describe(std::vector<double> v) {
  if (v.empty()) return "-";
  std::sort(v.begin(), v.end());
  const auto a = aggregate(v);
  const double median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(1) << a.mean << " +- " << a.sd << " [" << v.front() << ", " << median << ", "
     << v.back() << "]";
  return ss.str();
}

inline int cmd_inspect(const std::string& manifest, std::ostream& out, std::ostream& err) {
  std::vector<PatientRecord> records;
  std::vector<std::string> warnings;
  try {
    records = pair_closest_in_date(load_manifest(manifest, &warnings));
  } catch (const Error& e) {
    report_error(err, e);
    return data;
  }
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  out << records.size() << " patients";
  if (records.empty()) {
    out << "\n";
    return ok;
  }
  std::map<std::string, std::vector<const PatientRecord*>> by_class;
  for (const auto& r : records) by_class[r.class_label].push_back(&r);
  out << " in " << by_class.size() << " classes\n\n";

  const Target targets[] = {Target::ve_vco2, Target::vo2_pct_pred, Target::vo2_peak};
  out << std::left << std::setw(16) << "class" << std::setw(10) << "patients" << std::setw(10) << "letters";
  for (auto t : targets) out << std::setw(24) << (std::string(to_string(t)) + " n/missing");
  out << "\n";
  for (const auto& [label, rs] : by_class) {
    std::size_t letters = 0;
    for (const auto* r : rs) letters += r->letter.has_value();
    out << std::setw(16) << label << std::setw(10) << rs.size() << std::setw(10) << letters;
    for (auto t : targets) {
      std::size_t n = 0;
      for (const auto* r : rs) n += r->targets.get(t).has_value();
      out << std::setw(24) << (std::to_string(n) + "/" + std::to_string(rs.size() - n));
    }
    out << "\n";
  }

  for (auto t : targets) {
    const auto scheme = GroupingScheme::defaults(t);
    out << "\n" << to_string(t) << ": mean +- sd [min, median, max]; groups at";
    for (double th : scheme.thresholds) out << " " << th;
    out << "\n";
    for (const auto& [label, rs] : by_class) {
      std::vector<double> v;
      std::vector<std::size_t> groups(static_cast<std::size_t>(scheme.group_count()), 0);
      for (const auto* r : rs)
        if (auto x = r->targets.get(t)) {
          v.push_back(*x);
          ++groups[static_cast<std::size_t>(group_target(x, scheme))];
        }
      out << "  " << std::setw(16) << label << std::setw(40) << describe(v) << "groups";
      for (auto g : groups) out << " " << g;
      out << "\n";
    }
  }
  return ok;
}

// ---------------------------------------------------------------------------

inline int main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Riemannian ECG covariance + clinical letter fusion for CPET prediction"};
  app.require_subcommand(1);
  SynthOptions synth;
  RunOverrides run;
  std::string manifest;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus");
  add_synth_options(*synth_cmd, synth);
  auto* run_cmd = app.add_subcommand("run", "Run the ablation described by a config file");
  add_run_options(*run_cmd, run);
  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a manifest");
  inspect_cmd->add_option("manifest", manifest, "Manifest (JSON lines)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    const std::string help = sub ? sub->help() : app.help();
    if (dynamic_cast<const CLI::CallForHelp*>(&e) || dynamic_cast<const CLI::CallForAllHelp*>(&e)) {
      out << help;
      return ok;
    }
    err << "error: " << e.what() << "\n\n" << help;
    return usage;
  }

  if (*synth_cmd) return cmd_synth(synth, out, err);
  if (*run_cmd) return cmd_run(run, out, err);
  return cmd_inspect(manifest, out, err);
}

}  // namespace geocpet::cli
