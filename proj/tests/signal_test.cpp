#include "geocpet/signal.hpp"

#include <filesystem>

#include <gtest/gtest.h>

#include "geocpet/synth.hpp"
#include "test_util.hpp"

namespace geocpet {
namespace {

Recording single_lead(const Vector& x, double fs = 500.0) {
  return Recording(fs, {"DII"}, Matrix(x.transpose()));
}

Vector with_noise(Vector x, double sd, Rng& rng) {
  std::normal_distribution<double> nd(0.0, sd);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += nd(rng);
  return x;
}

TEST(RecordingTest, RejectsBadShapes) {
  EXPECT_THROW(Recording(0.0, {"a"}, Matrix::Zero(1, 10)), Error);
  EXPECT_THROW(Recording(500.0, {"a"}, Matrix::Zero(1, 1)), Error);
  EXPECT_THROW(Recording(500.0, {"a", "b"}, Matrix::Zero(1, 10)), Error);
  const Recording r(500.0, {"a"}, Matrix::Zero(1, 1000));
  EXPECT_DOUBLE_EQ(r.duration_seconds(), 2.0);
}

TEST(RecordingTest, CsvRoundTripIsExact) {
  Rng rng(1);
  const Matrix m = testing::random_symmetric(3, rng).replicate(1, 40);
  const Recording rec(250.0, {"x", "y", "z"}, m);
  const auto path = std::filesystem::temp_directory_path() / "geocpet_rec_roundtrip.csv";
  write_recording_csv(path, rec);
  const Recording back = read_recording_csv(path, 250.0);
  EXPECT_EQ(back.channel_names(), rec.channel_names());
  EXPECT_EQ(back.samples(), rec.samples());
  std::filesystem::remove(path);
}

TEST(RecordingTest, CsvErrorsNameTheLine) {
  const auto path = std::filesystem::temp_directory_path() / "geocpet_rec_bad.csv";
  {
    std::ofstream out(path);
    out << "a,b\n1,2\n3,oops\n";
  }
  try {
    read_recording_csv(path, 500.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::schema_error);
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(read_recording_csv(path, 500.0), Error);
}

TEST(PeakDetection, SixtyBpmTrain) {
  Rng rng(2);
  std::vector<Eigen::Index> truth;
  for (int b = 0; b < 10; ++b) truth.push_back(300 + 500 * b);
  const Vector x = with_noise(beat_train(5300, 500.0, truth), 0.02, rng);
  const auto peaks = detect_r_peaks(single_lead(x), 0);
  ASSERT_EQ(peaks.size(), truth.size());
  for (std::size_t i = 0; i < peaks.size(); ++i) EXPECT_LE(std::abs(peaks[i] - truth[i]), 2);
  for (std::size_t i = 1; i < peaks.size(); ++i) EXPECT_NEAR(double(peaks[i] - peaks[i - 1]), 500.0, 2.0);
}

TEST(PeakDetection, AllZeroSignal) {
  try {
    detect_r_peaks(single_lead(Vector::Zero(2000)), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_peaks_found);
  }
}

TEST(PeakDetection, SingleBeat) {
  const Vector x = beat_train(2000, 500.0, {700});
  const auto peaks = detect_r_peaks(single_lead(x), 0);
  ASSERT_EQ(peaks.size(), 1u);
  EXPECT_LE(std::abs(peaks[0] - 700), 2);
}

TEST(PeakDetection, RefractoryAndOrderingOnGeneratedRecords) {
  SynthSpec spec;
  spec.n_classes = 2;
  spec.patients_per_class = 3;
  spec.heart_rate_min_bpm = 55.0;
  spec.heart_rate_max_bpm = 110.0;
  const auto corpus = generate_corpus(spec);
  for (std::size_t i = 0; i < corpus.patients.size(); ++i) {
    const auto peaks = detect_r_peaks(corpus.recordings[i], 1);
    const auto& truth = corpus.patients[i].r_peaks;
    ASSERT_EQ(peaks.size(), truth.size()) << "patient " << i << " first peaks " << peaks[0] << "," << peaks[1]
                                          << " truth " << truth[0] << "," << truth[1];
    for (std::size_t k = 0; k < peaks.size(); ++k) {
      EXPECT_LE(std::abs(peaks[k] - truth[k]), 2);
      if (k) EXPECT_GE(peaks[k] - peaks[k - 1], 100);
    }
  }
}

TEST(PeakDetection, ShortRecordingRejected) {
  EXPECT_THROW(detect_r_peaks(single_lead(Vector::Ones(100)), 0), Error);
  EXPECT_THROW(detect_r_peaks(single_lead(Vector::Ones(1000)), 3), Error);
}

TEST(BeatWindows, CentralPeakGivesOneWindow) {
  const Recording rec(500.0, {"a", "b"}, Matrix::Random(2, 1250));
  const auto w = extract_beat_windows(rec, {625}, 1.0);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].samples.cols(), 500);
  EXPECT_EQ(w[0].r_index, 200);
  EXPECT_EQ(w[0].alignment, Alignment::r_aligned);
  EXPECT_EQ(w[0].samples.col(200), rec.samples().col(625));
}

TEST(BeatWindows, EdgePeakDropped) {
  const Recording rec(500.0, {"a"}, Matrix::Random(1, 1250));
  EXPECT_TRUE(extract_beat_windows(rec, {10}, 1.0).empty());
  EXPECT_TRUE(extract_beat_windows(rec, {1200}, 1.0).empty());
}

TEST(BeatWindows, CountMatchesPeaksThatFit) {
  const Recording rec(500.0, {"a"}, Matrix::Random(1, 5000));
  const auto w = extract_beat_windows(rec, {1000, 2000, 3000}, 1.0);
  ASSERT_EQ(w.size(), 3u);
  for (const auto& x : w) EXPECT_EQ(x.samples.cols(), 500);
  const std::vector<Eigen::Index> mixed{50, 199, 200, 1000, 4700, 4701};
  // Fits iff p - 200 >= 0 and p + 300 <= 5000.
  EXPECT_EQ(extract_beat_windows(rec, mixed, 1.0).size(), 3u);
}

TEST(BeatWindows, UnalignedTiling) {
  const Recording rec(500.0, {"a"}, Matrix::Random(1, 3000));
  const auto w = extract_unaligned_windows(rec, 2.5);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[1].samples.cols(), 1250);
  EXPECT_EQ(w[1].alignment, Alignment::unaligned);
}

TEST(Covariance, IdenticalRowsNeedShrinkage) {
  Rng rng(3);
  const Vector r = with_noise(Vector::Zero(200), 1.0, rng);
  SignalWindow win{Matrix(2, 200), Alignment::unaligned, -1};
  win.samples.row(0) = r.transpose();
  win.samples.row(1) = r.transpose();
  try {
    estimate_covariance(win, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate_window);
  }
  const SpdMatrix c = estimate_covariance(win, 0.1);
  EXPECT_GT(c.min_eigenvalue(), 0.0);
}

TEST(Covariance, WhiteNoiseConcentration) {
  Rng rng(4);
  const double sigma = 0.7;
  std::normal_distribution<double> nd(0.0, sigma);
  SignalWindow win{Matrix(12, 500), Alignment::unaligned, -1};
  for (Eigen::Index i = 0; i < win.samples.size(); ++i) win.samples.data()[i] = nd(rng);
  const SpdMatrix c = estimate_covariance(win, 0.0);
  const Matrix expected = Matrix::Identity(12, 12) * sigma * sigma;
  EXPECT_LT((c.values() - expected).norm() / expected.norm(), 0.25);
}

TEST(Covariance, MatchesSampleCovarianceOracle) {
  Rng rng(5);
  SignalWindow win{Matrix::Random(4, 100), Alignment::unaligned, -1};
  const Matrix x = win.samples.transpose();
  const Matrix centered = x.rowwise() - x.colwise().mean();
  const Matrix s = centered.transpose() * centered / 99.0;
  EXPECT_LT(testing::rel_fro(estimate_covariance(win, 0.0).values(), s), 1e-12);
  const double nu = s.trace() / 4.0;
  EXPECT_LT(testing::rel_fro(estimate_covariance(win, 1.0).values(), nu * Matrix::Identity(4, 4)), 1e-12);
}

TEST(Covariance, ScaleEquivariance) {
  SignalWindow win{Matrix::Random(5, 300), Alignment::unaligned, -1};
  SignalWindow scaled = win;
  scaled.samples *= 3.0;
  EXPECT_LT(testing::rel_fro(estimate_covariance(scaled, 0.0).values(),
                             9.0 * estimate_covariance(win, 0.0).values()),
            1e-12);
}

TEST(Covariance, ShrinkageMonotonicity) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    SignalWindow win{Matrix(6, 40), Alignment::unaligned, -1};
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Eigen::Index i = 0; i < win.samples.size(); ++i) win.samples.data()[i] = nd(rng);
    for (Eigen::Index t = 0; t < 40; ++t) win.samples(5, t) = win.samples(4, t) + 0.01 * nd(rng);
    double prev = 0.0;
    for (double g = 0.0; g <= 1.0 + 1e-12; g += 0.1) {
      const double lmin = estimate_covariance(win, g).min_eigenvalue();
      EXPECT_GE(lmin, prev * (1.0 - 1e-12));
      prev = lmin;
    }
  }
}

TEST(Covariance, ShortWindowNeedsShrinkage) {
  SignalWindow win{Matrix::Random(12, 10), Alignment::unaligned, -1};
  EXPECT_THROW(estimate_covariance(win, 0.0), Error);
  EXPECT_NO_THROW(estimate_covariance(win, 0.5));
  EXPECT_THROW(estimate_covariance(win, 1.5), Error);
}

TEST(RecordCovariance, GeneratedRecordsAreSpdAndNearTruth) {
  SynthSpec spec;
  spec.n_classes = 2;
  spec.patients_per_class = 2;
  const auto corpus = generate_corpus(spec);
  for (std::size_t i = 0; i < corpus.patients.size(); ++i) {
    for (auto align : {Alignment::r_aligned, Alignment::unaligned}) {
      CovarianceOptions opt;
      opt.alignment = align;
      const SpdMatrix c = record_covariance(corpus.recordings[i], opt);
      EXPECT_GT(c.min_eigenvalue(), 0.0);
      EXPECT_LT(riemannian_distance(c, SpdMatrix(corpus.patients[i].covariance)), 1.0);
    }
  }
}

TEST(BaselineFeatures, RateFromSpacing) {
  for (auto [spacing, bpm] : {std::pair{500, 60.0}, std::pair{300, 100.0}}) {
    std::vector<Eigen::Index> truth;
    for (int b = 0; b < 8; ++b) truth.push_back(400 + spacing * b);
    const Vector x = beat_train(truth.back() + 500, 500.0, truth);
    const auto f = compute_baseline_features(single_lead(x), 0);
    ASSERT_TRUE(f.ventricular_rate_bpm);
    EXPECT_NEAR(*f.ventricular_rate_bpm, bpm, 1e-9);
  }
  EXPECT_NEAR(*ventricular_rate({0, 500, 1000}, 500.0), 60.0, 1e-12);
  EXPECT_FALSE(ventricular_rate({10}, 500.0));
}

TEST(BaselineFeatures, QrsAndPrNearTemplate) {
  Rng rng(7);
  std::vector<Eigen::Index> truth;
  for (int b = 0; b < 10; ++b) truth.push_back(400 + 500 * b);
  const Vector x = with_noise(beat_train(5400, 500.0, truth), 0.01, rng);
  const auto f = compute_baseline_features(single_lead(x), 0);
  ASSERT_TRUE(f.qrs_duration_ms);
  EXPECT_NEAR(*f.qrs_duration_ms, kTemplateQrsMs, 20.0);
  ASSERT_TRUE(f.pr_interval_ms);
  EXPECT_NEAR(*f.pr_interval_ms, kTemplatePrMs, 40.0);
}

TEST(BaselineFeatures, FlatSignalHasMissingFields) {
  const auto f = compute_baseline_features(single_lead(Vector::Zero(2000)), 0);
  EXPECT_FALSE(f.ventricular_rate_bpm);
  EXPECT_FALSE(f.qrs_duration_ms);
  EXPECT_FALSE(f.pr_interval_ms);
}

}  // namespace
}  // namespace geocpet
