#pragma once

// Multi-channel recordings: R-peak detection, beat windowing, shrinkage
// covariance estimation and simple interval/rate measurements.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "geocpet/frechet_mean.hpp"
#include "geocpet/spd.hpp"

namespace geocpet {

inline const std::vector<std::string>& standard_lead_names() {
  static const std::vector<std::string> names{"DI", "DII", "DIII", "AVR", "AVL", "AVF",
                                              "V1", "V2",  "V3",   "V4",  "V5",  "V6"};
  return names;
}

/// channels x T samples at a fixed rate, values in millivolts.
class Recording {
 public:
  Recording(double sample_rate_hz, std::vector<std::string> channel_names, Matrix samples)
      : rate_(sample_rate_hz), names_(std::move(channel_names)), samples_(std::move(samples)) {
    if (!(rate_ > 0.0) || !std::isfinite(rate_)) {
      throw Error(Errc::schema_error, "sample rate must be positive");
    }
    if (samples_.cols() < 2) throw Error(Errc::schema_error, "recording needs at least 2 samples");
    if (static_cast<Eigen::Index>(names_.size()) != samples_.rows()) {
      throw Error(Errc::schema_error, std::to_string(names_.size()) + " channel names for " +
                                          std::to_string(samples_.rows()) + " channels");
    }
  }

  double sample_rate_hz() const { return rate_; }
  const std::vector<std::string>& channel_names() const { return names_; }
  const Matrix& samples() const { return samples_; }
  Eigen::Index channels() const { return samples_.rows(); }
  Eigen::Index length() const { return samples_.cols(); }
  double duration_seconds() const { return static_cast<double>(length()) / rate_; }

 private:
  double rate_;
  std::vector<std::string> names_;
  Matrix samples_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

/// Shortest round-trip form, or `precision` significant digits when > 0.
inline std::string format_double(double v, int precision = 0) {
  char buf[64];
  auto [p, ec] = precision > 0
                     ? std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, precision)
                     : std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace detail

/// Reads one record: header row of channel names, then one sample per row.
inline Recording read_recording_csv(const std::filesystem::path& path, double sample_rate_hz) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_file, path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::schema_error, path.string() + ": empty file");
  std::vector<std::string> names;
  for (auto& f : detail::split_csv_line(line)) names.push_back(detail::trim(f));

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != names.size()) {
      throw Error(Errc::schema_error, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                          std::to_string(names.size()) + " fields");
    }
    for (const auto& f : fields) {
      const std::string t = detail::trim(f);
      double v = 0.0;
      auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (ec != std::errc() || p != t.data() + t.size()) {
        throw Error(Errc::schema_error,
                    path.string() + ":" + std::to_string(line_no) + ": bad number '" + t + "'");
      }
      values.push_back(v);
    }
    ++rows;
  }
  const auto ch = static_cast<Eigen::Index>(names.size());
  Matrix samples(ch, static_cast<Eigen::Index>(rows));
  for (std::size_t r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < ch; ++c)
      samples(c, static_cast<Eigen::Index>(r)) = values[r * names.size() + static_cast<std::size_t>(c)];
  return Recording(sample_rate_hz, std::move(names), std::move(samples));
}

/// `precision` significant digits per value; 0 writes the exact shortest form.
inline void write_recording_csv(const std::filesystem::path& path, const Recording& rec,
                                int precision = 0) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  for (std::size_t i = 0; i < rec.channel_names().size(); ++i) {
    out << (i ? "," : "") << rec.channel_names()[i];
  }
  out << '\n';
  std::string row;
  for (Eigen::Index t = 0; t < rec.length(); ++t) {
    row.clear();
    for (Eigen::Index c = 0; c < rec.channels(); ++c) {
      if (c) row.push_back(',');
      row += detail::format_double(rec.samples()(c, t), precision);
    }
    out << row << '\n';
  }
  if (!out) throw Error(Errc::io_error, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// R-peak detection

struct PeakDetectorOptions {
  double mad_k = 4.0;              // threshold = median + mad_k * MAD of the energy envelope
  double refractory_s = 0.2;       // minimum spacing between accepted peaks
  double difference_span_s = 0.008; // x[t + k] - x[t - k]: a band-pass around QRS frequencies
  double energy_window_s = 0.05;   // moving-average length of the squared difference
  double relative_floor = 0.1;     // threshold never below this fraction of the envelope max
  double search_half_width_s = 0.06;
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

/// Centered moving average with a window of `w` samples (shrinks at edges).
inline std::vector<double> moving_average(const std::vector<double>& x, std::size_t w) {
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(n);
  const std::size_t half = w / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + (w - half));
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

}  // namespace detail

/// Detects R peaks on one lead.
///
/// Band-pass differencing, squared magnitude, moving-average envelope, adaptive
/// threshold median + k*MAD, refractory suppression, then refinement to the
/// largest deflection from the local median.
inline std::vector<Eigen::Index> detect_r_peaks(const Recording& rec, Eigen::Index lead,
                                                const PeakDetectorOptions& opt = {}) {
  if (lead < 0 || lead >= rec.channels()) {
    throw Error(Errc::dimension_mismatch, "lead index " + std::to_string(lead) + " out of range");
  }
  const double fs = rec.sample_rate_hz();
  const auto n = static_cast<std::size_t>(rec.length());
  if (static_cast<double>(n) < fs) {
    throw Error(Errc::schema_error, "recording shorter than one second");
  }
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = rec.samples()(lead, static_cast<Eigen::Index>(t));

  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opt.difference_span_s * fs)));
  std::vector<double> energy(n, 0.0);
  for (std::size_t t = k; t + k < n; ++t) {
    const double d = x[t + k] - x[t - k];
    energy[t] = d * d;
  }
  const auto win = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opt.energy_window_s * fs)));
  const std::vector<double> env = detail::moving_average(energy, win);

  const double env_max = *std::max_element(env.begin(), env.end());
  if (!(env_max > 0.0)) throw Error(Errc::no_peaks_found, "flat signal");
  const double med = detail::median_of(env);
  std::vector<double> dev(n);
  for (std::size_t t = 0; t < n; ++t) dev[t] = std::abs(env[t] - med);
  const double mad = detail::median_of(dev);
  const double threshold = std::max(med + opt.mad_k * mad, opt.relative_floor * env_max);

  std::vector<std::size_t> cand;
  for (std::size_t t = 0; t < n; ++t) {
    const double left = t > 0 ? env[t - 1] : -1.0;
    const double right = t + 1 < n ? env[t + 1] : -1.0;
    if (env[t] > threshold && env[t] > left && env[t] >= right) cand.push_back(t);
  }
  if (cand.empty()) throw Error(Errc::no_peaks_found, "no envelope maximum above threshold");

  const auto refractory = static_cast<std::size_t>(std::lround(opt.refractory_s * fs));
  std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
    return env[a] != env[b] ? env[a] > env[b] : a < b;
  });
  std::vector<std::size_t> kept;
  for (std::size_t c : cand) {
    bool clash = false;
    for (std::size_t k : kept) {
      if ((c > k ? c - k : k - c) < refractory) {
        clash = true;
        break;
      }
    }
    if (!clash) kept.push_back(c);
  }

  // Refine to the extremum of the raw lead around each envelope peak.
  const auto half = static_cast<std::size_t>(std::lround(opt.search_half_width_s * fs));
  const auto base_half = static_cast<std::size_t>(std::lround(0.2 * fs));
  struct Peak {
    std::size_t index;
    double amplitude;
  };
  std::vector<Peak> peaks;
  for (std::size_t c : kept) {
    const std::size_t blo = c >= base_half ? c - base_half : 0;
    const std::size_t bhi = std::min(n, c + base_half + 1);
    const double base = detail::median_of(std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(blo),
                                                              x.begin() + static_cast<std::ptrdiff_t>(bhi)));
    const std::size_t lo = c >= half ? c - half : 0;
    const std::size_t hi = std::min(n, c + half + 1);
    std::size_t best = c;
    double best_amp = -1.0;
    for (std::size_t t = lo; t < hi; ++t) {
      const double a = std::abs(x[t] - base);
      if (a > best_amp) {
        best_amp = a;
        best = t;
      }
    }
    peaks.push_back({best, best_amp});
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.index < b.index; });
  std::vector<Peak> merged;
  for (const Peak& p : peaks) {
    if (!merged.empty() && p.index - merged.back().index < refractory) {
      if (p.amplitude > merged.back().amplitude) merged.back() = p;
      continue;
    }
    merged.push_back(p);
  }
  std::vector<Eigen::Index> out;
  for (const Peak& p : merged) out.push_back(static_cast<Eigen::Index>(p.index));
  return out;
}

// ---------------------------------------------------------------------------
// Windows

enum class Alignment { r_aligned, unaligned };

struct SignalWindow {
  Matrix samples;  // channels x W
  Alignment alignment = Alignment::unaligned;
  Eigen::Index r_index = -1;  // position of the aligned R peak, r_aligned only
};

/// Fraction of the window that precedes the aligned R peak.
inline constexpr double kBeatROffset = 0.4;

inline Eigen::Index window_length(double window_seconds, double fs) {
  return static_cast<Eigen::Index>(std::lround(window_seconds * fs));
}

/// One window per peak with the R peak at 40% of the window; windows that do
/// not fit inside the recording are dropped.
inline std::vector<SignalWindow> extract_beat_windows(const Recording& rec,
                                                      const std::vector<Eigen::Index>& peaks,
                                                      double window_seconds) {
  const Eigen::Index w = window_length(window_seconds, rec.sample_rate_hz());
  const auto before = static_cast<Eigen::Index>(std::lround(kBeatROffset * static_cast<double>(w)));
  std::vector<SignalWindow> out;
  if (w < 2) return out;
  for (Eigen::Index p : peaks) {
    const Eigen::Index start = p - before;
    if (start < 0 || start + w > rec.length()) continue;
    out.push_back({rec.samples().middleCols(start, w), Alignment::r_aligned, before});
  }
  return out;
}

/// Consecutive non-overlapping windows from the start of the recording.
inline std::vector<SignalWindow> extract_unaligned_windows(const Recording& rec,
                                                           double window_seconds) {
  const Eigen::Index w = window_length(window_seconds, rec.sample_rate_hz());
  std::vector<SignalWindow> out;
  if (w < 2) return out;
  for (Eigen::Index s = 0; s + w <= rec.length(); s += w) {
    out.push_back({rec.samples().middleCols(s, w), Alignment::unaligned, -1});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Covariance

/// Sample covariance shrunk toward nu*I: (1 - gamma) S + gamma nu I, nu = tr(S)/n.
inline SpdMatrix estimate_covariance(const SignalWindow& win, double shrinkage,
                                     const Tolerances& tol = kTolerances) {
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) {
    throw Error(Errc::schema_error, "shrinkage must lie in [0, 1]");
  }
  const Eigen::Index ch = win.samples.rows();
  const Eigen::Index w = win.samples.cols();
  if (w < 2) throw Error(Errc::degenerate_window, "window shorter than 2 samples");
  if (w <= ch && shrinkage == 0.0) {
    throw Error(Errc::degenerate_window, "window of " + std::to_string(w) + " samples for " +
                                             std::to_string(ch) + " channels needs shrinkage");
  }
  const Vector mean = win.samples.rowwise().mean();
  const Matrix centered = win.samples.colwise() - mean;
  const Matrix s = centered * centered.transpose() / static_cast<double>(w - 1);
  const double nu = s.trace() / static_cast<double>(ch);
  const Matrix c =
      symmetrize((1.0 - shrinkage) * s + shrinkage * nu * Matrix::Identity(ch, ch));
  const EigenDecomposition eig = sym_eig(c, tol);
  const double lmax = eig.eigenvalues(0);
  const double lmin = eig.eigenvalues(ch - 1);
  if (!(lmax > 0.0) || !(lmin > tol.covariance_min_rcond * lmax)) {
    throw Error(Errc::degenerate_window,
                "covariance not positive definite (lambda_min " + std::to_string(lmin) + ")");
  }
  return SpdMatrix(c, tol);
}

struct CovarianceOptions {
  Alignment alignment = Alignment::r_aligned;
  double aligned_window_s = 1.0;
  double unaligned_window_s = 2.5;
  double shrinkage = 0.05;
  Eigen::Index lead = 1;
};

/// One SPD matrix per recording: the Riemannian mean of its window covariances.
inline SpdMatrix record_covariance(const Recording& rec, const CovarianceOptions& opt = {}) {
  std::vector<SignalWindow> windows;
  if (opt.alignment == Alignment::r_aligned) {
    windows = extract_beat_windows(rec, detect_r_peaks(rec, opt.lead), opt.aligned_window_s);
  } else {
    windows = extract_unaligned_windows(rec, opt.unaligned_window_s);
  }
  if (windows.empty()) throw Error(Errc::degenerate_window, "no complete window in recording");
  std::vector<SpdMatrix> covs;
  covs.reserve(windows.size());
  for (const auto& w : windows) covs.push_back(estimate_covariance(w, opt.shrinkage));
  return unweighted_riemannian_mean(covs);
}

// ---------------------------------------------------------------------------
// Rate and interval measurements (approximate surrogates, not vendor-exact)

struct BaselineFeatures {
  std::optional<double> ventricular_rate_bpm;
  std::optional<double> qrs_duration_ms;
  std::optional<double> pr_interval_ms;
};

/// 60 / mean R-R interval in seconds; empty with fewer than two peaks.
inline std::optional<double> ventricular_rate(const std::vector<Eigen::Index>& peaks, double fs) {
  if (peaks.size() < 2) return std::nullopt;
  const double span = static_cast<double>(peaks.back() - peaks.front());
  const double mean_rr = span / static_cast<double>(peaks.size() - 1) / fs;
  return 60.0 / mean_rr;
}

namespace detail {

/// First index of a run of `run` samples below `thr`, walking from `from` by `step`.
inline std::optional<Eigen::Index> quiet_boundary(const Vector& dev, Eigen::Index from, int step,
                                                  double thr, int run) {
  int count = 0;
  Eigen::Index first = -1;
  for (Eigen::Index i = from; i >= 0 && i < dev.size(); i += step) {
    if (dev(i) < thr) {
      if (count == 0) first = i;
      if (++count >= run) return first;
    } else {
      count = 0;
    }
  }
  return std::nullopt;
}

}  // namespace detail

struct IntervalOptions {
  double qrs_threshold = 0.05;  // fraction of R amplitude marking QRS boundaries
  double quiet_run_s = 0.008;   // boundary must stay below threshold this long
  double p_min_fraction = 0.03; // P wave must exceed this fraction of R amplitude
  double p_onset_fraction = 0.25;
};

/// Rate from R-R spacing; QRS duration and PR interval from the averaged
/// R-aligned beat on `lead` by threshold crossings.
inline BaselineFeatures compute_baseline_features(const Recording& rec, Eigen::Index lead = 1,
                                                  const IntervalOptions& opt = {}) {
  BaselineFeatures out;
  std::vector<Eigen::Index> peaks;
  try {
    peaks = detect_r_peaks(rec, lead);
  } catch (const Error& e) {
    if (e.code() != Errc::no_peaks_found && e.code() != Errc::schema_error) throw;
    return out;
  }
  const double fs = rec.sample_rate_hz();
  out.ventricular_rate_bpm = ventricular_rate(peaks, fs);

  const auto windows = extract_beat_windows(rec, peaks, 1.0);
  if (windows.empty()) return out;
  Vector beat = Vector::Zero(windows.front().samples.cols());
  for (const auto& w : windows) beat += w.samples.row(lead).transpose();
  beat /= static_cast<double>(windows.size());
  const Eigen::Index r = windows.front().r_index;

  std::vector<double> vals(beat.data(), beat.data() + beat.size());
  const double base = detail::median_of(vals);
  const Vector dev = (beat.array() - base).abs().matrix();
  const double amp = dev(r);
  if (!(amp > 0.0)) return out;
  const int run = std::max(1, static_cast<int>(std::lround(opt.quiet_run_s * fs)));
  const auto onset = detail::quiet_boundary(dev, r, -1, opt.qrs_threshold * amp, run);
  const auto offset = detail::quiet_boundary(dev, r, +1, opt.qrs_threshold * amp, run);
  if (!onset || !offset) return out;
  out.qrs_duration_ms = static_cast<double>(*offset - *onset) / fs * 1000.0;

  const Eigen::Index lo = std::max<Eigen::Index>(0, *onset - static_cast<Eigen::Index>(std::lround(0.3 * fs)));
  const Eigen::Index hi = *onset - static_cast<Eigen::Index>(std::lround(0.02 * fs));
  if (hi <= lo) return out;
  Eigen::Index p_peak = lo;
  for (Eigen::Index i = lo; i < hi; ++i)
    if (dev(i) > dev(p_peak)) p_peak = i;
  const double p_amp = dev(p_peak);
  if (p_amp < opt.p_min_fraction * amp) return out;
  Eigen::Index p_on = p_peak;
  while (p_on > 0 && dev(p_on) >= opt.p_onset_fraction * p_amp) --p_on;
  if (p_on <= 0) return out;
  out.pr_interval_ms = static_cast<double>(*onset - p_on) / fs * 1000.0;
  return out;
}

}  // namespace geocpet
