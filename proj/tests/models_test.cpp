#include "geocpet/models.hpp"

#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace geocpet {
namespace {

Matrix gaussian(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

/// Dual coefficient of every training row (zero for non-support rows).
Vector full_coef(const TrainedModel& m, Eigen::Index n, Eigen::Index machine = 0) {
  Vector beta = Vector::Zero(n);
  for (std::size_t r = 0; r < m.support_rows.size(); ++r)
    beta(m.support_rows[r]) = m.coef(static_cast<Eigen::Index>(r), machine);
  return beta;
}

/// Decision values recomputed from the kernel definition, independent of the
/// library's vectorized Gram matrix.
Vector oracle_decision(const TrainedModel& m, const Matrix& train, const Vector& beta, double bias) {
  Vector f = Vector::Constant(train.rows(), bias);
  for (Eigen::Index i = 0; i < train.rows(); ++i)
    for (Eigen::Index j = 0; j < train.rows(); ++j)
      if (beta(j) != 0.0) f(i) += beta(j) * m.kernel(train.row(j).transpose(), train.row(i).transpose());
  return f;
}

constexpr double kKkt = 1e-5 + 1e-9;

TEST(LinearLs, NoiselessLine) {
  Matrix x(5, 1);
  x << 0, 1, 2, 3, 4;
  const Vector y = 2.0 * x.col(0).array() + 1.0;
  const auto m = fit_linear_ls(x, y, 0.0);
  EXPECT_NEAR(m.weights(0, 0), 2.0, 1e-9);
  EXPECT_NEAR(m.bias(0), 1.0, 1e-9);
  const auto p = predict(m, x);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(p.values(i), y(i), 1e-9);
}

TEST(LinearLs, ConstantTarget) {
  Rng rng(1);
  const Matrix x = gaussian(10, 3, rng);
  const auto m = fit_linear_ls(x, Vector::Constant(10, 4.5), 0.0);
  EXPECT_EQ(m.weights, Matrix::Zero(3, 1));
  EXPECT_EQ(m.bias(0), 4.5);
}

TEST(LinearLs, MatchesNormalEquationOracle) {
  Rng rng(2);
  for (double ridge : {0.0, 0.5}) {
    const Matrix x = gaussian(40, 6, rng);
    const Vector y = gaussian(40, 1, rng).col(0);
    const auto m = fit_linear_ls(x, y, ridge);
    // [X 1]' [X 1] + diag(ridge, ..., ridge, 0)
    Matrix a(40, 7);
    a << x, Vector::Ones(40);
    Matrix normal = a.transpose() * a;
    normal.diagonal().head(6).array() += ridge;
    const Vector theta = normal.ldlt().solve(a.transpose() * y);
    const Vector oracle_resid = y - a * theta;
    const Vector resid = y - predict(m, x).values;
    EXPECT_LT((resid - oracle_resid).norm(), 1e-8);
  }
}

TEST(LinearLs, SingularWithoutRidge) {
  Rng rng(3);
  Matrix x = gaussian(10, 3, rng);
  x.col(2) = x.col(0) + x.col(1);
  try {
    fit_linear_ls(x, gaussian(10, 1, rng).col(0), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::singular_system);
  }
  EXPECT_NO_THROW(fit_linear_ls(x, gaussian(10, 1, rng).col(0), 0.1));
  // More features than samples.
  EXPECT_THROW(fit_linear_ls(gaussian(5, 8, rng), gaussian(5, 1, rng).col(0), 0.0), Error);
}

TEST(LinearLs, InputErrors) {
  EXPECT_THROW(fit_linear_ls(Matrix::Zero(1, 2), Vector::Zero(1), 0.0), Error);
  EXPECT_THROW(fit_linear_ls(Matrix::Zero(3, 2), Vector::Zero(2), 0.0), Error);
  EXPECT_THROW(fit_linear_ls(Matrix::Zero(3, 2), Vector::Zero(3), -1.0), Error);
}

TEST(LinearLsClassifier, SeparatesClouds) {
  Rng rng(4);
  Matrix x = gaussian(60, 2, rng) * 0.3;
  std::vector<int> labels(60);
  for (int i = 0; i < 60; ++i) {
    labels[i] = i % 3;
    // Clouds at the corners of a triangle.
    x(i, 0) += 3.0 * std::cos(2.0 * M_PI * (i % 3) / 3.0);
    x(i, 1) += 3.0 * std::sin(2.0 * M_PI * (i % 3) / 3.0);
  }
  const auto m = fit_linear_ls_classifier(x, labels, 0.0);
  EXPECT_EQ(m.classes, (std::vector<int>{0, 1, 2}));
  const auto p = predict(m, x);
  int hits = 0;
  for (int i = 0; i < 60; ++i) hits += p.labels[i] == labels[i];
  EXPECT_GE(hits, 57);
}

TEST(Svr, LinearDataWithinTube) {
  Rng rng(5);
  const Matrix x = gaussian(30, 3, rng);
  const Vector y = x * Vector::LinSpaced(3, 1.0, 2.0) + Vector::Constant(30, 0.5);
  const auto m = fit_svr(x, y, 1000.0, 0.01, KernelSpec{KernelKind::linear, std::nullopt});
  const auto p = predict(m, x);
  for (Eigen::Index i = 0; i < 30; ++i) EXPECT_LE(std::abs(p.values(i) - y(i)), 0.01 + 1e-3);
}

TEST(Svr, ConstantTargets) {
  Rng rng(6);
  const Matrix x = gaussian(12, 2, rng);
  const auto m = fit_svr(x, Vector::Constant(12, 3.0), 1.0, 0.1, KernelSpec{});
  EXPECT_EQ(m.support.rows(), 0);
  const auto p = predict(m, x);
  for (Eigen::Index i = 0; i < 12; ++i) EXPECT_NEAR(p.values(i), 3.0, 0.1 + 1e-9);
  EXPECT_LT((p.values.array() - p.values(0)).abs().maxCoeff(), 1e-15);
}

TEST(Svr, KktConditionsOnRandomProblems) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 25 + trial;
    const Matrix x = gaussian(n, 4, rng);
    const Vector y = gaussian(n, 1, rng).col(0) + x.col(0);
    const double c = 0.5 + trial * 0.25, eps = 0.1;
    const auto m = fit_svr(x, y, c, eps, trial % 2 ? KernelSpec{} : KernelSpec{KernelKind::linear, std::nullopt});
    EXPECT_LE(m.report.kkt_violation, 1e-5);
    EXPECT_GE(m.report.duality_gap, -1e-6);
    const Vector beta = full_coef(m, n);
    const Vector f = oracle_decision(m, x, beta, m.bias(0));
    EXPECT_NEAR(beta.sum(), 0.0, 1e-9);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double b = beta(i), r = y(i) - f(i);
      EXPECT_LE(std::abs(b), c + 1e-8);
      if (b == 0.0) EXPECT_LE(std::abs(r), eps + kKkt);
      else if (b > 0.0 && b < c) EXPECT_NEAR(r, eps, kKkt);
      else if (b >= c) EXPECT_GE(r, eps - kKkt);
      else if (b < 0.0 && b > -c) EXPECT_NEAR(r, -eps, kKkt);
      else EXPECT_LE(r, -eps + kKkt);
      // Strictly inside the tube means no coefficient.
      if (std::abs(r) < eps - kKkt) EXPECT_EQ(b, 0.0);
    }
  }
}

TEST(Svc, SeparableClouds) {
  Rng rng(8);
  Matrix x = gaussian(40, 2, rng) * 0.5;
  std::vector<int> labels(40);
  for (int i = 0; i < 40; ++i) {
    labels[i] = i < 20 ? 3 : 7;
    x(i, 1) += i < 20 ? -3.0 : 3.0;
  }
  const auto m = fit_svc(x, labels, 1.0, KernelSpec{KernelKind::linear, std::nullopt});
  EXPECT_EQ(m.classes, (std::vector<int>{3, 7}));
  EXPECT_EQ(predict(m, x).labels, labels);
}

TEST(Svc, XorWithRbf) {
  Rng rng(9);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  Matrix x(200, 2);
  std::vector<int> labels(200);
  for (int i = 0; i < 200; ++i) {
    x(i, 0) = ud(rng);
    x(i, 1) = ud(rng);
    labels[i] = (x(i, 0) > 0) == (x(i, 1) > 0) ? 1 : 0;
  }
  const auto m = fit_svc(x, labels, 10.0, KernelSpec{KernelKind::rbf, 2.0});
  const auto p = predict(m, x);
  int hits = 0;
  for (int i = 0; i < 200; ++i) hits += p.labels[i] == labels[i];
  EXPECT_GE(hits / 200.0, 0.95);
}

TEST(Svc, KktAndBoxConstraintsOnEveryMachine) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 30;
    const Matrix x = gaussian(n, 3, rng);
    std::vector<int> labels(n);
    for (Eigen::Index i = 0; i < n; ++i) labels[i] = (x(i, 0) + 0.5 * x(i, 1) > 0.3 * (trial % 3)) + (i % 7 == 0 ? 1 : 0);
    const double c = 1.0 + trial % 4;
    const auto m = fit_svc(x, labels, c, KernelSpec{});
    EXPECT_LE(m.report.kkt_violation, 1e-5);
    for (std::size_t k = 0; k < m.classes.size(); ++k) {
      const Vector beta = full_coef(m, n, static_cast<Eigen::Index>(k));
      const Vector f = oracle_decision(m, x, beta, m.bias(static_cast<Eigen::Index>(k)));
      for (Eigen::Index i = 0; i < n; ++i) {
        const double yi = labels[i] == m.classes[k] ? 1.0 : -1.0;
        const double alpha = yi * beta(i);
        const double margin = yi * f(i);
        EXPECT_GE(alpha, -1e-8);
        EXPECT_LE(alpha, c + 1e-8);
        if (alpha == 0.0) EXPECT_GE(margin, 1.0 - kKkt);
        else if (alpha < c) EXPECT_NEAR(margin, 1.0, kKkt);
        else EXPECT_LE(margin, 1.0 + kKkt);
        if (margin > 1.0 + kKkt) EXPECT_EQ(alpha, 0.0);
      }
    }
  }
}

TEST(Svc, SingleClass) {
  try {
    fit_svc(Matrix::Random(4, 2), {1, 1, 1, 1}, 1.0, KernelSpec{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::single_class);
  }
}

TEST(Svc, ArgmaxTieBreaksToLowestClass) {
  TrainedModel m;
  m.kind = ModelKind::linear_ls;
  m.dim = 1;
  m.classes = {2, 5, 9};
  m.weights = Matrix::Zero(1, 3);
  m.bias = Vector::Constant(3, 0.3);
  EXPECT_EQ(predict(m, Matrix::Ones(1, 1)).labels, (std::vector<int>{2}));
}

TEST(Svc, ArgmaxInvariantToPositiveScaling) {
  Rng rng(11);
  const Matrix x = gaussian(50, 3, rng);
  std::vector<int> labels(50);
  for (int i = 0; i < 50; ++i) labels[i] = i % 4;
  auto m = fit_svc(x, labels, 1.0, KernelSpec{});
  const auto before = predict(m, x);
  m.coef *= 3.7;
  m.bias *= 3.7;
  const auto after = predict(m, x);
  EXPECT_EQ(before.labels, after.labels);
}

TEST(Predict, DimensionMismatchAndShapes) {
  Rng rng(12);
  const Matrix x = gaussian(10, 3, rng);
  const auto m = fit_linear_ls(x, gaussian(10, 1, rng).col(0), 0.0);
  EXPECT_THROW(predict(m, Matrix::Zero(2, 4)), Error);
  EXPECT_EQ(predict(m, x.topRows(1)).values.size(), 1);
}

TEST(Predict, RowPermutationPermutesOutputs) {
  Rng rng(13);
  const Matrix x = gaussian(20, 3, rng);
  const Vector y = gaussian(20, 1, rng).col(0);
  const auto m = fit_svr(x, y, 1.0, 0.1, KernelSpec{});
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(20);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 20, rng);
  const Vector a = perm * predict(m, x).values;
  const Vector b = predict(m, perm * x).values;
  EXPECT_LT((a - b).norm(), 1e-12);
}

TEST(Determinism, BitIdenticalParameters) {
  Rng rng(14);
  const Matrix x = gaussian(30, 4, rng);
  std::vector<int> labels(30);
  for (int i = 0; i < 30; ++i) labels[i] = i % 3;
  const auto a = fit_svc(x, labels, 2.0, KernelSpec{});
  const auto b = fit_svc(x, labels, 2.0, KernelSpec{});
  EXPECT_EQ(a.coef, b.coef);
  EXPECT_EQ(a.bias, b.bias);
  EXPECT_EQ(a.support_rows, b.support_rows);
}

TEST(Persistence, ExactRoundTrip) {
  Rng rng(15);
  const Matrix x = gaussian(25, 3, rng);
  std::vector<int> labels(25);
  for (int i = 0; i < 25; ++i) labels[i] = i % 3;
  const Vector y = gaussian(25, 1, rng).col(0);
  for (const auto& m : {fit_svc(x, labels, 1.0, KernelSpec{}), fit_svr(x, y, 1.0, 0.1, KernelSpec{}),
                        fit_linear_ls(x, y, 0.1), fit_linear_ls_classifier(x, labels, 0.1)}) {
    std::stringstream ss;
    save_model(m, ss);
    const auto back = load_model(ss);
    EXPECT_EQ(back.kind, m.kind);
    EXPECT_EQ(back.kernel.kind, m.kernel.kind);
    EXPECT_EQ(back.kernel.gamma, m.kernel.gamma);
    EXPECT_EQ(back.classes, m.classes);
    EXPECT_EQ(back.weights, m.weights);
    EXPECT_EQ(back.support, m.support);
    EXPECT_EQ(back.coef, m.coef);
    EXPECT_EQ(back.bias, m.bias);
    EXPECT_EQ(back.support_rows, m.support_rows);
    EXPECT_EQ(decision_function(back, x), decision_function(m, x));
  }
  std::stringstream bad("not-a-model\n");
  EXPECT_THROW(load_model(bad), Error);
}

TEST(KernelSpecTest, DefaultGamma) {
  Matrix x(2, 2);
  x << 0, 2, 2, 0;  // entries have mean 1, variance 1
  const auto k = KernelSpec{}.resolved(x);
  EXPECT_DOUBLE_EQ(*k.gamma, 0.5);
  EXPECT_THROW((KernelSpec{KernelKind::rbf, -1.0}.validate()), Error);
}

}  // namespace
}  // namespace geocpet
