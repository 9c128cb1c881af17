#pragma once

// Patient-level data model: manifest ingestion, closest-in-date pairing of
// exercise tests and letters to the ECG, feature fusion and target grouping.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "geocpet/signal.hpp"
#include "geocpet/spd.hpp"
#include "geocpet/text.hpp"

namespace geocpet {

using Date = std::chrono::sys_days;

/// Parses YYYY-MM-DD.
inline std::optional<Date> parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  const auto y = num(0, 4), m = num(5, 2), d = num(8, 2);
  if (!y || !m || !d) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year(*y),
                                        std::chrono::month(static_cast<unsigned>(*m)),
                                        std::chrono::day(static_cast<unsigned>(*d))};
  if (!ymd.ok()) return std::nullopt;
  return Date(ymd);
}

inline std::string format_date(Date d) {
  const std::chrono::year_month_day ymd(d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

enum class Target { ve_vco2, vo2_pct_pred, vo2_peak, class_label };

inline std::string_view to_string(Target t) {
  switch (t) {
    case Target::ve_vco2: return "ve_vco2";
    case Target::vo2_pct_pred: return "vo2_pct_pred";
    case Target::vo2_peak: return "vo2_peak";
    case Target::class_label: return "class_label";
  }
  return "";
}

inline std::optional<Target> parse_target(std::string_view s) {
  for (Target t : {Target::ve_vco2, Target::vo2_pct_pred, Target::vo2_peak, Target::class_label})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

struct Targets {
  std::optional<double> ve_vco2;
  std::optional<double> vo2_pct_pred;
  std::optional<double> vo2_peak;

  bool any() const { return ve_vco2 || vo2_pct_pred || vo2_peak; }
  std::optional<double> get(Target t) const {
    switch (t) {
      case Target::ve_vco2: return ve_vco2;
      case Target::vo2_pct_pred: return vo2_pct_pred;
      case Target::vo2_peak: return vo2_peak;
      case Target::class_label: return std::nullopt;
    }
    return std::nullopt;
  }
};

struct CpetCandidate {
  std::optional<Date> date;
  Targets targets;
};

struct LetterCandidate {
  std::filesystem::path path;
  std::optional<Date> date;
};

struct PatientRecord {
  std::string patient_id;
  std::string class_label;
  std::filesystem::path ecg_path;
  Date ecg_date{};
  double sample_rate_hz = 500.0;
  std::vector<CpetCandidate> cpet_candidates;
  std::vector<LetterCandidate> letter_candidates;
  std::size_t manifest_line = 0;

  // Filled by pair_closest_in_date.
  Targets targets;
  std::optional<Date> cpet_date;
  std::optional<LetterCandidate> letter;
};

namespace detail {

inline std::string schema_where(std::size_t line, std::string_view field) {
  return "line " + std::to_string(line) + ", field '" + std::string(field) + "'";
}

inline std::optional<double> optional_number(const nlohmann::json& obj, const char* key,
                                             std::size_t line) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw Error(Errc::schema_error, schema_where(line, key) + ": expected number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw Error(Errc::schema_error, schema_where(line, key) + ": not finite");
  return d;
}

inline std::optional<std::string> optional_string(const nlohmann::json& obj, const char* key,
                                                  std::size_t line) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  const auto& v = obj.at(key);
  if (!v.is_string()) throw Error(Errc::schema_error, schema_where(line, key) + ": expected string");
  return v.get<std::string>();
}

inline std::string required_string(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto s = optional_string(obj, key, line);
  if (!s || s->empty()) throw Error(Errc::schema_error, schema_where(line, key) + ": required");
  return *s;
}

inline std::optional<Date> optional_date(const nlohmann::json& obj, const char* key,
                                         std::size_t line) {
  auto s = optional_string(obj, key, line);
  if (!s) return std::nullopt;
  auto d = parse_date(*s);
  if (!d) throw Error(Errc::schema_error, schema_where(line, key) + ": not an ISO date '" + *s + "'");
  return d;
}

inline void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                       std::size_t line) {
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw Error(Errc::schema_error, schema_where(line, k) + ": unknown key");
  }
}

inline Targets read_targets(const nlohmann::json& obj, std::size_t line) {
  return Targets{optional_number(obj, "ve_vco2", line), optional_number(obj, "vo2_pct_pred", line),
                 optional_number(obj, "vo2_peak", line)};
}

}  // namespace detail

/// Reads a JSON-lines manifest. Paths are resolved against the manifest's
/// directory. Besides the flat per-patient keys, `cpet_tests` and `letters`
/// arrays may list additional candidate documents for date pairing.
/// Patients with no target in any exercise test are skipped with a warning.
inline std::vector<PatientRecord> load_manifest(const std::filesystem::path& path,
                                                std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_file, path.string());
  const auto base = path.parent_path();
  static const std::set<std::string> kKeys{
      "patient_id", "class_label", "ecg_csv",  "ecg_date",     "letter_txt", "letter_date",
      "cpet_date",  "ve_vco2",     "vo2_pct_pred", "vo2_peak", "sample_rate_hz", "cpet_tests",
      "letters"};
  static const std::set<std::string> kCpetKeys{"cpet_date", "ve_vco2", "vo2_pct_pred", "vo2_peak"};
  static const std::set<std::string> kLetterKeys{"letter_txt", "letter_date"};

  std::vector<PatientRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::schema_error, "line " + std::to_string(line_no) + ": malformed JSON (" +
                                          std::string(e.what()) + ")");
    }
    if (!obj.is_object()) {
      throw Error(Errc::schema_error, "line " + std::to_string(line_no) + ": expected an object");
    }
    detail::check_keys(obj, kKeys, line_no);

    PatientRecord r;
    r.manifest_line = line_no;
    r.patient_id = detail::required_string(obj, "patient_id", line_no);
    if (!seen.insert(r.patient_id).second) {
      throw Error(Errc::schema_error, detail::schema_where(line_no, "patient_id") +
                                          ": duplicate patient id '" + r.patient_id + "'");
    }
    r.class_label = detail::required_string(obj, "class_label", line_no);
    r.ecg_path = base / detail::required_string(obj, "ecg_csv", line_no);
    auto ecg_date = detail::optional_date(obj, "ecg_date", line_no);
    if (!ecg_date) throw Error(Errc::schema_error, detail::schema_where(line_no, "ecg_date") + ": required");
    r.ecg_date = *ecg_date;
    if (auto sr = detail::optional_number(obj, "sample_rate_hz", line_no)) {
      if (!(*sr > 0.0)) throw Error(Errc::schema_error, detail::schema_where(line_no, "sample_rate_hz") + ": must be positive");
      r.sample_rate_hz = *sr;
    }

    CpetCandidate flat{detail::optional_date(obj, "cpet_date", line_no),
                       detail::read_targets(obj, line_no)};
    if (flat.targets.any() || flat.date) r.cpet_candidates.push_back(flat);
    if (obj.contains("cpet_tests")) {
      const auto& arr = obj.at("cpet_tests");
      if (!arr.is_array()) throw Error(Errc::schema_error, detail::schema_where(line_no, "cpet_tests") + ": expected array");
      for (const auto& c : arr) {
        if (!c.is_object()) throw Error(Errc::schema_error, detail::schema_where(line_no, "cpet_tests") + ": expected objects");
        detail::check_keys(c, kCpetKeys, line_no);
        r.cpet_candidates.push_back({detail::optional_date(c, "cpet_date", line_no),
                                     detail::read_targets(c, line_no)});
      }
    }

    auto add_letter = [&](const nlohmann::json& o) {
      auto txt = detail::optional_string(o, "letter_txt", line_no);
      auto date = detail::optional_date(o, "letter_date", line_no);
      if (!txt) {
        if (date) throw Error(Errc::schema_error, detail::schema_where(line_no, "letter_txt") + ": letter_date without letter_txt");
        return;
      }
      r.letter_candidates.push_back({base / *txt, date});
    };
    add_letter(obj);
    if (obj.contains("letters")) {
      const auto& arr = obj.at("letters");
      if (!arr.is_array()) throw Error(Errc::schema_error, detail::schema_where(line_no, "letters") + ": expected array");
      for (const auto& l : arr) {
        if (!l.is_object()) throw Error(Errc::schema_error, detail::schema_where(line_no, "letters") + ": expected objects");
        detail::check_keys(l, kLetterKeys, line_no);
        add_letter(l);
      }
    }

    const bool has_target = std::any_of(r.cpet_candidates.begin(), r.cpet_candidates.end(),
                                        [](const CpetCandidate& c) { return c.targets.any(); });
    if (!has_target) {
      if (warnings) warnings->push_back("line " + std::to_string(line_no) + ": patient '" +
                                        r.patient_id + "' has no exercise-test target; excluded");
      continue;
    }
    if (!std::filesystem::exists(r.ecg_path)) {
      throw Error(Errc::missing_file, detail::schema_where(line_no, "ecg_csv") + ": " + r.ecg_path.string());
    }
    for (const auto& l : r.letter_candidates) {
      if (!std::filesystem::exists(l.path)) {
        throw Error(Errc::missing_file, detail::schema_where(line_no, "letter_txt") + ": " + l.path.string());
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace detail {

/// Index of the candidate closest in date to `anchor`; ties go to the earlier
/// document, undated candidates rank last, then manifest order.
template <class T, class DateOf>
std::optional<std::size_t> closest_in_date(const std::vector<T>& cands, Date anchor, DateOf date_of) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (!best) {
      best = i;
      continue;
    }
    const std::optional<Date> di = date_of(cands[i]);
    const std::optional<Date> db = date_of(cands[*best]);
    if (!di) continue;
    if (!db) {
      best = i;
      continue;
    }
    const auto gi = std::chrono::abs(*di - anchor);
    const auto gb = std::chrono::abs(*db - anchor);
    if (gi < gb || (gi == gb && *di < *db)) best = i;
  }
  return best;
}

}  // namespace detail

/// Resolves each record's exercise test and letter to the candidate nearest the ECG date.
inline std::vector<PatientRecord> pair_closest_in_date(std::vector<PatientRecord> records) {
  for (auto& r : records) {
    std::vector<CpetCandidate> with_targets;
    for (const auto& c : r.cpet_candidates)
      if (c.targets.any()) with_targets.push_back(c);
    if (auto i = detail::closest_in_date(with_targets, r.ecg_date,
                                         [](const CpetCandidate& c) { return c.date; })) {
      r.targets = with_targets[*i].targets;
      r.cpet_date = with_targets[*i].date;
    }
    if (auto i = detail::closest_in_date(r.letter_candidates, r.ecg_date,
                                         [](const LetterCandidate& c) { return c.date; })) {
      r.letter = r.letter_candidates[*i];
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Standardization and fusion

/// Per-coordinate z-scoring fitted on one training fold. Zero-variance
/// coordinates are centered but not scaled.
class Standardizer {
 public:
  Standardizer() = default;

  /// Rows are samples.
  static Standardizer fit(const Matrix& x, int fold_id) {
    if (x.rows() < 1) throw Error(Errc::empty_input, "cannot fit a scaler on zero rows");
    Standardizer s;
    s.fold_ = fold_id;
    s.mean_ = x.colwise().mean().transpose();
    s.scale_ = Vector::Ones(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - s.mean_(j)).square().mean();
      if (var > 0.0) s.scale_(j) = std::sqrt(var);
    }
    return s;
  }

  bool fitted() const { return fold_.has_value(); }
  int fold_id() const { return fold_.value_or(-1); }
  Eigen::Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Vector& scale() const { return scale_; }

  Vector transform(const Vector& row, int fold_id) const {
    check(row.size(), fold_id);
    return ((row - mean_).array() / scale_.array()).matrix();
  }

  Matrix transform_rows(const Matrix& x, int fold_id) const {
    check(x.cols(), fold_id);
    Matrix out = x.rowwise() - mean_.transpose();
    for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) /= scale_(j);
    return out;
  }

 private:
  void check(Eigen::Index d, int fold_id) const {
    if (!fold_) throw Error(Errc::scaler_not_fitted, "standardizer used before fit");
    if (*fold_ != fold_id) {
      throw Error(Errc::leakage, "scaler fitted on fold " + std::to_string(*fold_) +
                                     " applied to fold " + std::to_string(fold_id));
    }
    if (d != mean_.size()) {
      throw Error(Errc::dimension_mismatch, "scaler fitted on " + std::to_string(mean_.size()) +
                                                " coordinates, got " + std::to_string(d));
    }
  }

  std::optional<int> fold_;
  Vector mean_;
  Vector scale_;
};

struct FusedFeature {
  TangentVector tangent;
  std::optional<TermVector> terms;
  Vector combined;
};

/// Raw concatenation [tangent coords, term counts].
inline Vector concat_features(const TangentVector& tangent, const std::optional<TermVector>& terms) {
  const Eigen::Index nt = tangent.coords.size();
  const Eigen::Index nw = terms ? static_cast<Eigen::Index>(terms->size()) : 0;
  Vector raw(nt + nw);
  raw.head(nt) = tangent.coords;
  for (Eigen::Index i = 0; i < nw; ++i) raw(nt + i) = terms->values[static_cast<std::size_t>(i)];
  return raw;
}

/// Standardized concatenation, tangent block first.
inline FusedFeature fuse(const TangentVector& tangent, const std::optional<TermVector>& terms,
                         const Standardizer& scaler, int fold_id) {
  if (!scaler.fitted()) throw Error(Errc::scaler_not_fitted, "fuse called with an unfitted scaler");
  Vector combined = scaler.transform(concat_features(tangent, terms), fold_id);
  return FusedFeature{tangent, terms, std::move(combined)};
}

// ---------------------------------------------------------------------------
// Grouping

struct GroupingScheme {
  Target target = Target::ve_vco2;
  std::vector<double> thresholds;  // ascending

  int group_count() const { return static_cast<int>(thresholds.size()) + 1; }

  void validate() const {
    if (!std::is_sorted(thresholds.begin(), thresholds.end()) ||
        std::adjacent_find(thresholds.begin(), thresholds.end()) != thresholds.end()) {
      throw Error(Errc::config_error, "grouping thresholds must be strictly ascending");
    }
  }

  /// Defaults anchored to normal ranges: VE/VCO2 upper bound 30, VO2 peak
  /// lower bound 25 ml/kg/min, VO2 %pred bands around 60-85%.
  static GroupingScheme defaults(Target t) {
    switch (t) {
      case Target::ve_vco2: return {t, {30.0}};
      case Target::vo2_peak: return {t, {25.0}};
      case Target::vo2_pct_pred: return {t, {50.0, 65.0, 85.0}};
      case Target::class_label: return {t, {}};
    }
    return {t, {}};
  }
};

/// Number of thresholds strictly below the value.
inline int group_target(std::optional<double> value, const GroupingScheme& scheme) {
  if (!value) throw Error(Errc::missing_target, std::string(to_string(scheme.target)) + " missing");
  int g = 0;
  for (double t : scheme.thresholds)
    if (t < *value) ++g;
  return g;
}

// ---------------------------------------------------------------------------
// Loaded dataset

struct PatientData {
  std::string patient_id;
  std::string class_label;
  int class_index = 0;
  Targets targets;
  SpdMatrix covariance;
  BaselineFeatures baseline;
  std::optional<Tokens> letter_tokens;
};

struct Dataset {
  std::vector<PatientData> patients;
  std::vector<std::string> class_names;  // sorted; class_index refers here
};

struct DatasetOptions {
  CovarianceOptions covariance;
  LetterMode letter_mode = LetterMode::lists;
};

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::missing_file, p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// One patient's raw inputs after document pairing.
struct RawPatient {
  std::string patient_id;
  std::string class_label;
  Targets targets;
  Recording recording;
  std::optional<std::string> letter_text;
};

/// Reduces each patient to one covariance, baseline measurements and letter
/// tokens. Per-patient processing does not look at other patients, so nothing
/// here can leak across a train/test split.
inline Dataset build_dataset(const std::vector<RawPatient>& raw, const DatasetOptions& opt = {}) {
  Dataset ds;
  std::set<std::string> classes;
  for (const auto& r : raw) classes.insert(r.class_label);
  ds.class_names.assign(classes.begin(), classes.end());
  ds.patients.reserve(raw.size());
  for (const auto& r : raw) {
    SpdMatrix cov = [&] {
      try {
        return record_covariance(r.recording, opt.covariance);
      } catch (const Error& e) {
        throw Error(e.code(), "patient '" + r.patient_id + "': " + e.what());
      }
    }();
    std::optional<Tokens> tokens;
    if (r.letter_text) tokens = tokenize(letter_document(*r.letter_text, opt.letter_mode));
    const auto idx = std::lower_bound(ds.class_names.begin(), ds.class_names.end(), r.class_label) -
                     ds.class_names.begin();
    ds.patients.push_back(PatientData{r.patient_id, r.class_label, static_cast<int>(idx), r.targets,
                                      std::move(cov),
                                      compute_baseline_features(r.recording, opt.covariance.lead),
                                      std::move(tokens)});
  }
  return ds;
}

/// Loads the manifest, pairs documents by date and reads every referenced file.
inline std::vector<RawPatient> read_raw_patients(const std::filesystem::path& manifest,
                                                 std::vector<std::string>* warnings = nullptr) {
  auto records = pair_closest_in_date(load_manifest(manifest, warnings));
  std::vector<RawPatient> raw;
  raw.reserve(records.size());
  for (const auto& r : records) {
    std::optional<std::string> letter;
    if (r.letter) letter = read_text_file(r.letter->path);
    raw.push_back(RawPatient{r.patient_id, r.class_label, r.targets,
                             read_recording_csv(r.ecg_path, r.sample_rate_hz), std::move(letter)});
  }
  return raw;
}

inline Dataset load_dataset(const std::filesystem::path& manifest, const DatasetOptions& opt = {},
                            std::vector<std::string>* warnings = nullptr) {
  return build_dataset(read_raw_patients(manifest, warnings), opt);
}

}  // namespace geocpet
