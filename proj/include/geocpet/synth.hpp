#pragma once

// Synthetic corpus with known ground truth: class-center covariances at a
// chosen geodesic separation, per-patient recordings whose covariance is the
// patient's SPD matrix, letters drawn from class and modifier vocabularies,
// and targets that are a known function of both.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "geocpet/dataset.hpp"
#include "geocpet/rng.hpp"
#include "geocpet/signal.hpp"
#include "geocpet/spd.hpp"

namespace geocpet {

/// One Gaussian component of the beat shape, times relative to the R peak.
struct Wave {
  double center_s;
  double width_s;
  double amplitude;
};

/// P, Q, R, S and T waves. The QRS complex spans about -40..+40 ms and the
/// P wave onset precedes R by about 160 ms.
inline const std::vector<Wave>& beat_waves() {
  static const std::vector<Wave> waves{{-0.160, 0.020, 0.12},
                                       {-0.022, 0.006, -0.25},
                                       {0.000, 0.008, 1.00},
                                       {0.022, 0.006, -0.35},
                                       {0.280, 0.040, 0.30}};
  return waves;
}

inline constexpr double kTemplateQrsMs = 80.0;
/// Fraction of the lead-DII variance carried by the beat template.
inline constexpr double kTemplateShare = 0.95;
inline constexpr double kTemplatePrMs = 160.0;

inline double beat_template(double t_rel) {
  double v = 0.0;
  for (const auto& w : beat_waves()) {
    const double z = (t_rel - w.center_s) / w.width_s;
    if (std::abs(z) < 12.0) v += w.amplitude * std::exp(-0.5 * z * z);
  }
  return v;
}

/// Sum of beat templates at the given R-peak sample positions.
inline Vector beat_train(Eigen::Index length, double fs, const std::vector<Eigen::Index>& peaks) {
  Vector s = Vector::Zero(length);
  const auto reach = static_cast<Eigen::Index>(std::ceil(0.6 * fs));
  for (Eigen::Index p : peaks) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, p - reach);
    const Eigen::Index hi = std::min<Eigen::Index>(length, p + reach + 1);
    for (Eigen::Index i = lo; i < hi; ++i) s(i) += beat_template(static_cast<double>(i - p) / fs);
  }
  return s;
}

struct SynthSpec {
  int n_classes = 5;
  int patients_per_class = 20;
  std::vector<int> class_sizes;  // overrides patients_per_class when non-empty
  int channels = 12;
  double sample_rate_hz = 500.0;
  int beats_per_record = 12;
  double heart_rate_min_bpm = 60.0;
  double heart_rate_max_bpm = 80.0;
  double class_separation = 2.0;  // geodesic distance between class centers
  double patient_spread = 0.3;    // typical geodesic distance of a patient from its center
  double target_noise = 0.5;      // sd of additive target noise, in target units
  double letter_effect = 1.0;     // target shift per present modifier pool, in target sd units
  int modifier_pools = 3;
  int class_tokens = 6;           // tokens per class vocabulary pool
  int tokens_per_list = 4;
  bool shared_letters = false;    // letters carry no class information
  std::vector<std::vector<std::string>> vocab_pools;  // per class; generated when empty
  int csv_precision = 7;
  std::uint64_t seed = 1;

  std::vector<int> sizes() const {
    if (!class_sizes.empty()) return class_sizes;
    return std::vector<int>(static_cast<std::size_t>(n_classes), patients_per_class);
  }

  void validate() const {
    const auto s = sizes();
    if (s.empty()) throw Error(Errc::config_error, "need at least one class");
    if (!class_sizes.empty() && static_cast<int>(class_sizes.size()) != n_classes) {
      throw Error(Errc::config_error, "class_sizes must list one size per class");
    }
    for (int c : s)
      if (c < 1) throw Error(Errc::config_error, "every class needs at least one patient");
    if (channels < 2) throw Error(Errc::config_error, "channels must be >= 2");
    if (!(sample_rate_hz > 0.0)) throw Error(Errc::config_error, "sample rate must be positive");
    if (beats_per_record < 1) throw Error(Errc::config_error, "beats_per_record must be >= 1");
    if (!(heart_rate_min_bpm > 0.0) || heart_rate_max_bpm < heart_rate_min_bpm) {
      throw Error(Errc::config_error, "invalid heart rate range");
    }
    if (!(class_separation >= 0.0) || !(patient_spread >= 0.0) || !(target_noise >= 0.0)) {
      throw Error(Errc::config_error, "separation, spread and noise must be >= 0");
    }
    const int dim = channels * (channels + 1) / 2;
    if (n_classes > dim) throw Error(Errc::config_error, "too many classes for the tangent dimension");
    if (!vocab_pools.empty() && static_cast<int>(vocab_pools.size()) != n_classes) {
      throw Error(Errc::config_error, "vocab_pools must list one pool per class");
    }
    if (modifier_pools < 0 || class_tokens < 1 || tokens_per_list < 1) {
      throw Error(Errc::config_error, "invalid letter vocabulary sizes");
    }
  }
};

/// Per-target linear model: value = offset + scale * (w . latent + sum of
/// present modifier effects) + noise.
struct TargetModel {
  Target target;
  double offset;
  double scale;
  Vector weights;
  std::vector<double> modifier_effects;
};

struct SynthPatient {
  std::string patient_id;
  int class_index = 0;
  Matrix covariance;
  Vector latent;                  // tangent coordinates at the base point
  std::vector<bool> modifiers;    // which modifier pools appear in the letter
  std::vector<double> noise;      // standard-normal draw per target
  double heart_rate_bpm = 60.0;
  std::vector<Eigen::Index> r_peaks;
  Targets targets;
  std::string ecg_date;
  std::string cpet_date;
  std::string letter_date;
  std::string letter;
};

struct SynthCorpus {
  SynthSpec spec;
  Matrix base;
  std::vector<Matrix> class_centers;
  std::vector<std::vector<std::string>> class_vocab;
  std::vector<std::vector<std::string>> modifier_vocab;
  std::vector<TargetModel> target_models;
  std::vector<SynthPatient> patients;
  std::vector<Recording> recordings;
};

inline std::string synth_class_name(int c) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "class%02d", c);
  return buf;
}

namespace detail {

inline Vector standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

/// Columns are orthonormal; first `k` of a Gram-Schmidt pass over Gaussians.
inline Matrix orthonormal_columns(Eigen::Index dim, Eigen::Index k, Rng& rng) {
  Matrix q(dim, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    Vector v = standard_normal(dim, rng);
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i = 0; i < j; ++i) v -= q.col(i).dot(v) * q.col(i);
    q.col(j) = v / v.norm();
  }
  return q;
}

inline Matrix congruence_exp(const Matrix& ref, const Vector& whitened_coords) {
  const SpdMatrix r(ref);
  const Matrix s = r.sqrt();
  return symmetrize(s * matrix_exp(upper_unvectorize(whitened_coords)) * s);
}

inline std::string date_string(int base_days, int offset_days) {
  return format_date(Date(std::chrono::days(base_days + offset_days)));
}

inline std::vector<std::string> pick_tokens(const std::vector<std::string>& pool, int count, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) out.push_back(pool[pick(rng)]);
  return out;
}

inline std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

}  // namespace detail

/// Recomputes a target from stored latents; used to check emitted ground truth.
inline double recompute_target(const TargetModel& m, const Vector& latent,
                               const std::vector<bool>& modifiers, double noise_sd, double noise) {
  double effect = m.weights.dot(latent);
  for (std::size_t j = 0; j < modifiers.size(); ++j)
    if (modifiers[j]) effect += m.modifier_effects[j];
  return m.offset + m.scale * effect + noise_sd * noise;
}

/// Builds the corpus in memory. Identical specs give identical corpora.
inline SynthCorpus generate_corpus(const SynthSpec& spec) {
  spec.validate();
  SynthCorpus out;
  out.spec = spec;
  const Eigen::Index n = spec.channels;
  const Eigen::Index dim = n * (n + 1) / 2;
  const double fs = spec.sample_rate_hz;
  Rng rng(derive_seed(spec.seed, 0));

  // Base point: random rotation of log-uniform eigenvalues in [0.5, 2].
  {
    Eigen::HouseholderQR<Matrix> qr(Matrix(detail::standard_normal(n * n, rng).reshaped(n, n)));
    const Matrix q = qr.householderQ();
    std::uniform_real_distribution<double> ud(std::log(0.5), std::log(2.0));
    Vector lam(n);
    for (Eigen::Index i = 0; i < n; ++i) lam(i) = std::exp(ud(rng));
    out.base = symmetrize(q * lam.asDiagonal() * q.transpose());
  }

  // Class centers along orthonormal directions: pairwise tangent distance
  // |d (u_c - u_k) / sqrt 2| = d.
  const Matrix dirs = detail::orthonormal_columns(dim, spec.n_classes, rng);
  for (int c = 0; c < spec.n_classes; ++c) {
    const Vector coords = spec.class_separation / std::sqrt(2.0) * dirs.col(c);
    out.class_centers.push_back(detail::congruence_exp(out.base, coords));
  }

  // Vocabularies.
  for (int c = 0; c < spec.n_classes; ++c) {
    if (!spec.vocab_pools.empty()) {
      out.class_vocab.push_back(spec.vocab_pools[static_cast<std::size_t>(c)]);
      continue;
    }
    std::vector<std::string> pool;
    for (int k = 0; k < spec.class_tokens; ++k)
      pool.push_back("dx" + std::to_string(spec.shared_letters ? 0 : c) + "t" + std::to_string(k));
    out.class_vocab.push_back(pool);
  }
  for (int j = 0; j < spec.modifier_pools; ++j) {
    std::vector<std::string> pool;
    for (int k = 0; k < 3; ++k) pool.push_back("rx" + std::to_string(j) + "m" + std::to_string(k));
    out.modifier_vocab.push_back(pool);
  }
  static const std::vector<std::string> kFiller{"review", "clinic", "stable", "follow", "plan", "seen"};

  // Target models. Weights have unit norm so that the ECG part has spread on
  // the order of the patient spread.
  {
    const std::vector<std::tuple<Target, double, double>> kinds{
        {Target::ve_vco2, 30.0, 4.0}, {Target::vo2_pct_pred, 70.0, 12.0}, {Target::vo2_peak, 25.0, 5.0}};
    std::uniform_int_distribution<int> coin(0, 1);
    for (const auto& [t, offset, scale] : kinds) {
      TargetModel m{t, offset, scale, detail::standard_normal(dim, rng), {}};
      m.weights /= m.weights.norm();
      for (int j = 0; j < spec.modifier_pools; ++j)
        m.modifier_effects.push_back(spec.letter_effect * (coin(rng) ? 1.0 : -1.0));
      out.target_models.push_back(std::move(m));
    }
  }

  const SpdMatrix base_spd(out.base);
  const ReferencePoint base_ref(base_spd);
  static const std::vector<std::string> kNames{"Alex", "Sam", "Robin", "Jordan", "Casey", "Morgan"};
  const auto sizes = spec.sizes();
  int serial = 0;
  for (int c = 0; c < spec.n_classes; ++c) {
    for (int k = 0; k < sizes[static_cast<std::size_t>(c)]; ++k, ++serial) {
      Rng prng(derive_seed(spec.seed, 1000 + static_cast<std::uint64_t>(serial)));
      SynthPatient p;
      char id[32];
      std::snprintf(id, sizeof(id), "P%04d", serial);
      p.patient_id = id;
      p.class_index = c;

      // Covariance: geodesic perturbation of the class center.
      const Vector z = detail::standard_normal(dim, prng) * (spec.patient_spread / std::sqrt(double(dim)));
      p.covariance = detail::congruence_exp(out.class_centers[static_cast<std::size_t>(c)], z);
      const SpdMatrix cov(p.covariance);
      p.latent = tangent_project(base_ref, cov).coords;

      // Letter.
      std::uniform_int_distribution<int> coin(0, 1);
      std::vector<std::string> meds;
      for (int j = 0; j < spec.modifier_pools; ++j) {
        p.modifiers.push_back(coin(prng) == 1);
        if (p.modifiers.back()) {
          auto t = detail::pick_tokens(out.modifier_vocab[static_cast<std::size_t>(j)], 2, prng);
          meds.insert(meds.end(), t.begin(), t.end());
        }
      }
      const auto dx = detail::pick_tokens(out.class_vocab[static_cast<std::size_t>(c)], spec.tokens_per_list, prng);
      const auto filler = detail::pick_tokens(kFiller, 3, prng);
      std::uniform_int_distribution<std::size_t> pick_name(0, kNames.size() - 1);
      std::uniform_int_distribution<int> postcode(10, 99);
      p.letter = "Name: " + kNames[pick_name(prng)] + "\n" + "Postcode: AB" +
                 std::to_string(postcode(prng)) + "\n" + "Diagnosis List: " + detail::join(dx, ", ") +
                 "\n" + "Intervention List: " + detail::join(filler, ", ") + "\n" +
                 "Medication List: " + (meds.empty() ? std::string("none") : detail::join(meds, ", ")) +
                 "\n" + "Seen in clinic today.\n";

      // Targets.
      std::normal_distribution<double> nd(0.0, 1.0);
      for (std::size_t t = 0; t < out.target_models.size(); ++t) p.noise.push_back(nd(prng));

      // Recording: template times a loading vector plus Gaussian noise with
      // covariance P - v a a^T, so that the record covariance is close to P.
      std::uniform_real_distribution<double> hr(spec.heart_rate_min_bpm, spec.heart_rate_max_bpm);
      p.heart_rate_bpm = spec.heart_rate_min_bpm == spec.heart_rate_max_bpm ? spec.heart_rate_min_bpm : hr(prng);
      const double rr = 60.0 / p.heart_rate_bpm * fs;
      const auto first = static_cast<Eigen::Index>(std::lround(0.6 * fs));
      for (int b = 0; b < spec.beats_per_record; ++b)
        p.r_peaks.push_back(first + static_cast<Eigen::Index>(std::lround(b * rr)));
      const Eigen::Index length = p.r_peaks.back() + static_cast<Eigen::Index>(std::lround(0.8 * fs));
      const Vector s = beat_train(length, fs, p.r_peaks);
      const double v = (s.array() - s.mean()).square().sum() / static_cast<double>(length - 1);
      const Vector a = p.covariance.col(1 % n) * std::sqrt(kTemplateShare / (v * p.covariance(1 % n, 1 % n)));
      const Matrix noise_cov = symmetrize(p.covariance - v * a * a.transpose());
      const Eigen::LLT<Matrix> llt(noise_cov);
      const Matrix l = llt.matrixL();
      Matrix samples(n, length);
      for (Eigen::Index t = 0; t < length; ++t)
        samples.col(t) = a * s(t) + l * detail::standard_normal(n, prng);

      std::vector<std::string> names;
      if (n == 12) {
        names = standard_lead_names();
      } else {
        for (Eigen::Index i = 0; i < n; ++i) names.push_back("CH" + std::to_string(i));
      }
      out.recordings.emplace_back(fs, std::move(names), std::move(samples));

      std::uniform_int_distribution<int> day(16000, 18000);
      std::uniform_int_distribution<int> shift(-60, 60);
      const int ecg_day = day(prng);
      p.ecg_date = detail::date_string(ecg_day, 0);
      p.cpet_date = detail::date_string(ecg_day, shift(prng));
      p.letter_date = detail::date_string(ecg_day, shift(prng));
      out.patients.push_back(std::move(p));
    }
  }

  for (auto& p : out.patients) {
    for (std::size_t t = 0; t < out.target_models.size(); ++t) {
      const auto& m = out.target_models[t];
      const double value = recompute_target(m, p.latent, p.modifiers, spec.target_noise, p.noise[t]);
      switch (m.target) {
        case Target::ve_vco2: p.targets.ve_vco2 = value; break;
        case Target::vo2_pct_pred: p.targets.vo2_pct_pred = value; break;
        case Target::vo2_peak: p.targets.vo2_peak = value; break;
        case Target::class_label: break;
      }
    }
  }
  return out;
}

inline std::vector<RawPatient> corpus_patients(const SynthCorpus& corpus) {
  std::vector<RawPatient> raw;
  for (std::size_t i = 0; i < corpus.patients.size(); ++i) {
    const auto& p = corpus.patients[i];
    raw.push_back(RawPatient{p.patient_id, synth_class_name(p.class_index), p.targets,
                             corpus.recordings[i], p.letter});
  }
  return raw;
}

namespace detail {

inline nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector_json(const Vector& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(Errc::io_error, "write failed for " + p.string());
}

}  // namespace detail

inline nlohmann::json ground_truth_json(const SynthCorpus& c) {
  nlohmann::json spec{{"n_classes", c.spec.n_classes},
                      {"class_sizes", c.spec.sizes()},
                      {"channels", c.spec.channels},
                      {"sample_rate_hz", c.spec.sample_rate_hz},
                      {"beats_per_record", c.spec.beats_per_record},
                      {"class_separation", c.spec.class_separation},
                      {"patient_spread", c.spec.patient_spread},
                      {"target_noise", c.spec.target_noise},
                      {"letter_effect", c.spec.letter_effect},
                      {"shared_letters", c.spec.shared_letters},
                      {"seed", c.spec.seed}};
  nlohmann::json j;
  j["spec"] = spec;
  j["latent_coordinates"] = "upper-triangle tangent coordinates at base_point, sqrt(2) off-diagonal weighting";
  j["base_point"] = detail::matrix_json(c.base);
  j["class_centers"] = nlohmann::json::array();
  for (std::size_t k = 0; k < c.class_centers.size(); ++k) {
    j["class_centers"].push_back({{"class_label", synth_class_name(static_cast<int>(k))},
                                  {"matrix", detail::matrix_json(c.class_centers[k])},
                                  {"vocabulary", c.class_vocab[k]}});
  }
  j["modifier_vocabulary"] = c.modifier_vocab;
  j["targets"] = nlohmann::json::array();
  for (const auto& m : c.target_models) {
    j["targets"].push_back({{"name", std::string(to_string(m.target))},
                            {"offset", m.offset},
                            {"scale", m.scale},
                            {"weights", detail::vector_json(m.weights)},
                            {"modifier_effects", m.modifier_effects}});
  }
  j["patients"] = nlohmann::json::array();
  for (const auto& p : c.patients) {
    nlohmann::json mods = nlohmann::json::array();
    for (bool b : p.modifiers) mods.push_back(b);
    nlohmann::json targets;
    for (const auto& m : c.target_models) targets[std::string(to_string(m.target))] = *p.targets.get(m.target);
    j["patients"].push_back({{"patient_id", p.patient_id},
                             {"class_label", synth_class_name(p.class_index)},
                             {"latent", detail::vector_json(p.latent)},
                             {"modifiers", mods},
                             {"noise", p.noise},
                             {"heart_rate_bpm", p.heart_rate_bpm},
                             {"r_peaks", p.r_peaks},
                             {"targets", targets}});
  }
  return j;
}

/// Writes manifest.jsonl, ecg/<id>.csv, letters/<id>.txt and ground_truth.json.
/// A non-empty `dir` is refused unless `force` is set.
inline void write_corpus(const SynthCorpus& c, const std::filesystem::path& dir, bool force = false) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir, ec)) throw Error(Errc::io_error, dir.string() + " is not a directory");
    if (!fs::is_empty(dir, ec) && !force) {
      throw Error(Errc::io_error, dir.string() + " is not empty (use --force to overwrite)");
    }
  }
  fs::create_directories(dir / "ecg", ec);
  if (ec) throw Error(Errc::io_error, "cannot create " + (dir / "ecg").string() + ": " + ec.message());
  fs::create_directories(dir / "letters", ec);
  if (ec) throw Error(Errc::io_error, "cannot create " + (dir / "letters").string() + ": " + ec.message());

  std::string manifest;
  for (std::size_t i = 0; i < c.patients.size(); ++i) {
    const auto& p = c.patients[i];
    const std::string ecg_rel = "ecg/" + p.patient_id + ".csv";
    const std::string letter_rel = "letters/" + p.patient_id + ".txt";
    write_recording_csv(dir / ecg_rel, c.recordings[i], c.spec.csv_precision);
    detail::write_text(dir / letter_rel, p.letter);
    nlohmann::ordered_json row;
    row["patient_id"] = p.patient_id;
    row["class_label"] = synth_class_name(p.class_index);
    row["ecg_csv"] = ecg_rel;
    row["ecg_date"] = p.ecg_date;
    row["letter_txt"] = letter_rel;
    row["letter_date"] = p.letter_date;
    row["cpet_date"] = p.cpet_date;
    row["ve_vco2"] = *p.targets.ve_vco2;
    row["vo2_pct_pred"] = *p.targets.vo2_pct_pred;
    row["vo2_peak"] = *p.targets.vo2_peak;
    row["sample_rate_hz"] = c.spec.sample_rate_hz;
    manifest += row.dump() + "\n";
  }
  detail::write_text(dir / "manifest.jsonl", manifest);
  detail::write_text(dir / "ground_truth.json", ground_truth_json(c).dump(1) + "\n");
}

}  // namespace geocpet
