#pragma once

// Predictors: ridge least squares and kernel machines (epsilon-SVR and
// one-vs-rest SVC) trained by a two-variable working-set dual solver.

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

#include <Eigen/Dense>

#include "geocpet/config.hpp"
#include "geocpet/error.hpp"
#include "geocpet/spd.hpp"

namespace geocpet {

enum class KernelKind { linear, rbf };

struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  std::optional<double> gamma;  // rbf only; unset means 1 / (dim * variance of X)

  void validate() const {
    if (kind == KernelKind::rbf && gamma && (!std::isfinite(*gamma) || !(*gamma > 0.0))) {
      throw Error(Errc::config_error, "rbf gamma must be finite and positive");
    }
  }

  /// Fills in the default gamma from the training matrix (rows are samples).
  KernelSpec resolved(const Matrix& x) const {
    KernelSpec k = *this;
    if (k.kind == KernelKind::rbf && !k.gamma) {
      const double n = static_cast<double>(x.size());
      const double mean = x.sum() / n;
      const double var = (x.array() - mean).square().sum() / n;
      const double d = static_cast<double>(std::max<Eigen::Index>(1, x.cols()));
      k.gamma = var > 0.0 ? 1.0 / (d * var) : 1.0 / d;
    }
    return k;
  }

  double operator()(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) const {
    if (kind == KernelKind::linear) return a.dot(b);
    return std::exp(-gamma.value() * (a - b).squaredNorm());
  }
};

/// Gram matrix between the rows of `a` and the rows of `b`.
inline Matrix kernel_matrix(const KernelSpec& k, const Matrix& a, const Matrix& b) {
  if (k.kind == KernelKind::linear) return a * b.transpose();
  const Vector na = a.rowwise().squaredNorm();
  const Vector nb = b.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * a * b.transpose()).colwise() + na;
  d2.rowwise() += nb.transpose();
  return (-k.gamma.value() * d2.array().max(0.0)).exp().matrix();
}

enum class ModelKind { linear_ls, svr, svc };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::linear_ls: return "linear_ls";
    case ModelKind::svr: return "svr";
    case ModelKind::svc: return "svc";
  }
  return "";
}

struct SolverReport {
  long pair_updates = 0;
  double kkt_violation = 0.0;  // max over machines of m(alpha) - M(alpha) at exit
  double duality_gap = 0.0;    // max over machines, primal minus dual objective
};

/// Immutable fitted model. Linear models keep a d x K weight matrix; kernel
/// machines keep their support vectors and an s x K coefficient matrix. K is 1
/// for regression and the number of classes for one-vs-rest classification.
struct TrainedModel {
  ModelKind kind = ModelKind::linear_ls;
  KernelSpec kernel;
  Eigen::Index dim = 0;
  std::vector<int> classes;  // ascending; empty for regression

  Matrix weights;  // linear_ls: d x K
  Matrix support;  // kernel machines: s x d
  std::vector<Eigen::Index> support_rows;  // training row of each support vector
  Matrix coef;     // kernel machines: s x K
  Vector bias;     // K

  SolverReport report;

  bool is_classifier() const { return !classes.empty(); }
};

// ---------------------------------------------------------------------------
// Least squares

namespace detail {

inline void check_xy(const Matrix& x, Eigen::Index ny) {
  if (x.rows() != ny) {
    throw Error(Errc::dimension_mismatch, std::to_string(x.rows()) + " rows for " + std::to_string(ny) + " targets");
  }
  if (x.rows() < 2) throw Error(Errc::insufficient_samples, "need at least 2 training rows");
  if (!x.allFinite()) throw Error(Errc::degenerate_input, "non-finite feature value");
}

/// Minimizes ||X w + b - y||^2 + ridge ||w||^2 for each column of Y.
inline std::pair<Matrix, Vector> solve_ridge(const Matrix& x, const Matrix& y, double ridge,
                                            const Tolerances& tol) {
  const Vector xm = x.colwise().mean().transpose();
  const Vector ym = y.colwise().mean().transpose();
  const Matrix xc = x.rowwise() - xm.transpose();
  const Matrix yc = y.rowwise() - ym.transpose();
  Matrix w;
  if (ridge > 0.0) {
    Matrix a(xc.rows() + xc.cols(), xc.cols());
    a << xc, std::sqrt(ridge) * Matrix::Identity(xc.cols(), xc.cols());
    Matrix rhs = Matrix::Zero(a.rows(), yc.cols());
    rhs.topRows(yc.rows()) = yc;
    w = a.colPivHouseholderQr().solve(rhs);
  } else {
    Eigen::ColPivHouseholderQR<Matrix> qr(xc);
    qr.setThreshold(tol.ls_rank_rel);
    if (qr.rank() < xc.cols()) {
      throw Error(Errc::singular_system, "least-squares design has rank " + std::to_string(qr.rank()) +
                                             " < " + std::to_string(xc.cols()) + "; use ridge > 0");
    }
    w = qr.solve(yc);
  }
  const Vector b = ym - w.transpose() * xm;
  return {w, b};
}

}  // namespace detail

inline TrainedModel fit_linear_ls(const Matrix& x, const Vector& y, double ridge,
                                  const Tolerances& tol = kTolerances) {
  detail::check_xy(x, y.size());
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw Error(Errc::config_error, "ridge must be >= 0");
  TrainedModel m;
  m.kind = ModelKind::linear_ls;
  m.kernel = KernelSpec{KernelKind::linear, std::nullopt};
  m.dim = x.cols();
  // Constant targets: the intercept alone fits exactly.
  if ((y.array() == y(0)).all()) {
    m.weights = Matrix::Zero(x.cols(), 1);
    m.bias = Vector::Constant(1, y(0));
    return m;
  }
  auto [w, b] = detail::solve_ridge(x, Matrix(y), ridge, tol);
  if (!w.allFinite()) throw Error(Errc::singular_system, "non-finite least-squares solution");
  m.weights = std::move(w);
  m.bias = std::move(b);
  return m;
}

/// One-vs-rest least squares on +-1 indicator targets.
inline TrainedModel fit_linear_ls_classifier(const Matrix& x, const std::vector<int>& labels, double ridge,
                                             const Tolerances& tol = kTolerances) {
  detail::check_xy(x, static_cast<Eigen::Index>(labels.size()));
  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw Error(Errc::single_class, "training labels contain one class");
  Matrix y(x.rows(), static_cast<Eigen::Index>(classes.size()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < classes.size(); ++c)
      y(i, static_cast<Eigen::Index>(c)) = labels[static_cast<std::size_t>(i)] == classes[c] ? 1.0 : -1.0;
  TrainedModel m;
  m.kind = ModelKind::linear_ls;
  m.kernel = KernelSpec{KernelKind::linear, std::nullopt};
  m.dim = x.cols();
  m.classes = std::move(classes);
  std::tie(m.weights, m.bias) = detail::solve_ridge(x, y, ridge, tol);
  if (!m.weights.allFinite()) throw Error(Errc::singular_system, "non-finite least-squares solution");
  return m;
}

// ---------------------------------------------------------------------------
// Dual solver

namespace detail {

/// min 1/2 a'Qa + p'a  s.t.  y'a = const, 0 <= a_i <= C, with Q_ij = y_i y_j K(i mod n, j mod n).
/// Maximal-violating-pair working set selection.
struct DualProblem {
  const Matrix& k;  // n x n kernel matrix
  std::vector<signed char> y;
  Vector p;
  double c;
  Eigen::Index n() const { return k.rows(); }
  double q(Eigen::Index i, Eigen::Index j) const {
    return static_cast<double>(y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(j)]) * k(i % n(), j % n());
  }
};

struct DualSolution {
  Vector alpha;
  Vector grad;
  double rho = 0.0;
  long updates = 0;
  double violation = 0.0;
};

inline DualSolution solve_dual(const DualProblem& prob, const Tolerances& tol) {
  const auto l = static_cast<Eigen::Index>(prob.y.size());
  const double c = prob.c;
  DualSolution s;
  s.alpha = Vector::Zero(l);
  s.grad = prob.p;
  auto yv = [&](Eigen::Index t) { return static_cast<double>(prob.y[static_cast<std::size_t>(t)]); };
  auto in_up = [&](Eigen::Index t) { return yv(t) > 0 ? s.alpha(t) < c : s.alpha(t) > 0.0; };
  auto in_low = [&](Eigen::Index t) { return yv(t) > 0 ? s.alpha(t) > 0.0 : s.alpha(t) < c; };

  while (true) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    Eigen::Index i = -1, j = -1;
    for (Eigen::Index t = 0; t < l; ++t) {
      const double v = -yv(t) * s.grad(t);
      if (in_up(t) && v > gmax) {
        gmax = v;
        i = t;
      }
      if (in_low(t) && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    s.violation = (i < 0 || j < 0) ? 0.0 : gmax - gmin;
    if (i < 0 || j < 0 || s.violation <= tol.svm_kkt) break;
    if (s.updates >= tol.svm_max_pair_updates) {
      throw Error(Errc::no_convergence, "dual solver hit " + std::to_string(tol.svm_max_pair_updates) +
                                            " pair updates (KKT violation " + std::to_string(s.violation) + ")");
    }
    ++s.updates;

    const double qii = prob.q(i, i), qjj = prob.q(j, j), qij = prob.q(i, j);
    const double ai_old = s.alpha(i), aj_old = s.alpha(j);
    double& ai = s.alpha(i);
    double& aj = s.alpha(j);
    if (yv(i) != yv(j)) {
      double quad = qii + qjj + 2.0 * qij;
      if (quad <= 0.0) quad = 1e-12;
      const double delta = (-s.grad(i) - s.grad(j)) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > 0.0) {
        if (ai > c) {
          ai = c;
          aj = c - diff;
        }
      } else if (aj > c) {
        aj = c;
        ai = c + diff;
      }
    } else {
      double quad = qii + qjj - 2.0 * qij;
      if (quad <= 0.0) quad = 1e-12;
      const double delta = (s.grad(i) - s.grad(j)) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > c) {
        if (ai > c) {
          ai = c;
          aj = sum - c;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > c) {
        if (aj > c) {
          aj = c;
          ai = sum - c;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
    }
    const double di = ai - ai_old, dj = aj - aj_old;
    for (Eigen::Index t = 0; t < l; ++t) s.grad(t) += prob.q(t, i) * di + prob.q(t, j) * dj;
  }

  // Offset: average over free variables, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum = 0.0;
  long nfree = 0;
  for (Eigen::Index t = 0; t < l; ++t) {
    const double yg = yv(t) * s.grad(t);
    if (s.alpha(t) >= c) {
      if (yv(t) < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (s.alpha(t) <= 0.0) {
      if (yv(t) > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      sum += yg;
      ++nfree;
    }
  }
  s.rho = nfree > 0 ? sum / static_cast<double>(nfree) : 0.5 * (ub + lb);
  return s;
}

inline void check_c(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw Error(Errc::config_error, "C must be positive");
}

/// Keeps training rows whose coefficient is nonzero in any machine.
inline void compact_support(TrainedModel& m, const Matrix& x, const Matrix& coef) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < coef.rows(); ++i)
    if ((coef.row(i).array() != 0.0).any()) keep.push_back(i);
  m.support_rows = keep;
  m.support.resize(static_cast<Eigen::Index>(keep.size()), x.cols());
  m.coef.resize(static_cast<Eigen::Index>(keep.size()), coef.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    m.support.row(static_cast<Eigen::Index>(r)) = x.row(keep[r]);
    m.coef.row(static_cast<Eigen::Index>(r)) = coef.row(keep[r]);
  }
}

}  // namespace detail

/// epsilon-insensitive support vector regression.
inline TrainedModel fit_svr(const Matrix& x, const Vector& y, double c, double epsilon, const KernelSpec& kernel,
                            const Tolerances& tol = kTolerances) {
  detail::check_xy(x, y.size());
  detail::check_c(c);
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw Error(Errc::config_error, "epsilon must be >= 0");
  kernel.validate();
  TrainedModel m;
  m.kind = ModelKind::svr;
  m.kernel = kernel.resolved(x);
  m.dim = x.cols();
  const Eigen::Index n = x.rows();
  const Matrix k = kernel_matrix(m.kernel, x, x);

  detail::DualProblem prob{k, std::vector<signed char>(static_cast<std::size_t>(2 * n)), Vector(2 * n), c};
  for (Eigen::Index i = 0; i < n; ++i) {
    prob.y[static_cast<std::size_t>(i)] = 1;
    prob.y[static_cast<std::size_t>(i + n)] = -1;
    prob.p(i) = epsilon - y(i);
    prob.p(i + n) = epsilon + y(i);
  }
  const auto sol = detail::solve_dual(prob, tol);
  Matrix coef(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) coef(i, 0) = sol.alpha(i) - sol.alpha(i + n);
  m.bias = Vector::Constant(1, -sol.rho);

  // Duality gap from the primal objective at the recovered function.
  const Vector beta = coef.col(0);
  const Vector f = k * beta + Vector::Constant(n, m.bias(0));
  const double reg = 0.5 * beta.dot(k * beta);
  const double loss = ((y - f).array().abs() - epsilon).max(0.0).sum();
  const double dual = -(reg + epsilon * sol.alpha.sum() - y.dot(beta));
  m.report = {sol.updates, sol.violation, reg + c * loss - dual};

  detail::compact_support(m, x, coef);
  return m;
}

/// One-vs-rest C-SVC. Machine c separates class `classes[c]` from the rest.
inline TrainedModel fit_svc(const Matrix& x, const std::vector<int>& labels, double c, const KernelSpec& kernel,
                            const Tolerances& tol = kTolerances) {
  detail::check_xy(x, static_cast<Eigen::Index>(labels.size()));
  detail::check_c(c);
  kernel.validate();
  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw Error(Errc::single_class, "training labels contain one class");

  TrainedModel m;
  m.kind = ModelKind::svc;
  m.kernel = kernel.resolved(x);
  m.dim = x.cols();
  m.classes = classes;
  const Eigen::Index n = x.rows();
  const auto kc = static_cast<Eigen::Index>(classes.size());
  const Matrix k = kernel_matrix(m.kernel, x, x);
  Matrix coef(n, kc);
  m.bias.resize(kc);
  for (Eigen::Index cls = 0; cls < kc; ++cls) {
    detail::DualProblem prob{k, std::vector<signed char>(static_cast<std::size_t>(n)), Vector::Constant(n, -1.0), c};
    for (Eigen::Index i = 0; i < n; ++i)
      prob.y[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == classes[static_cast<std::size_t>(cls)] ? 1 : -1;
    const auto sol = detail::solve_dual(prob, tol);
    for (Eigen::Index i = 0; i < n; ++i) coef(i, cls) = prob.y[static_cast<std::size_t>(i)] * sol.alpha(i);
    m.bias(cls) = -sol.rho;

    const Vector beta = coef.col(cls);
    const Vector f = k * beta + Vector::Constant(n, m.bias(cls));
    const double reg = 0.5 * beta.dot(k * beta);
    double hinge = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) hinge += std::max(0.0, 1.0 - prob.y[static_cast<std::size_t>(i)] * f(i));
    const double dual = sol.alpha.sum() - reg;
    m.report.pair_updates += sol.updates;
    m.report.kkt_violation = std::max(m.report.kkt_violation, sol.violation);
    m.report.duality_gap = std::max(m.report.duality_gap, reg + c * hinge - dual);
  }
  detail::compact_support(m, x, coef);
  return m;
}

// ---------------------------------------------------------------------------
// Prediction

struct Prediction {
  Vector values;            // regression outputs
  std::vector<int> labels;  // classification: argmax class id
  Matrix scores;            // classification: rows x classes decision scores
};

/// Raw decision values, rows x K.
inline Matrix decision_function(const TrainedModel& m, const Matrix& x) {
  if (x.cols() != m.dim) {
    throw Error(Errc::dimension_mismatch, "model expects " + std::to_string(m.dim) + " features, got " +
                                              std::to_string(x.cols()));
  }
  Matrix out;
  if (m.kind == ModelKind::linear_ls) {
    out = x * m.weights;
  } else if (m.support.rows() == 0) {
    out = Matrix::Zero(x.rows(), m.coef.cols());
  } else {
    out = kernel_matrix(m.kernel, x, m.support) * m.coef;
  }
  out.rowwise() += m.bias.transpose();
  return out;
}

inline Prediction predict(const TrainedModel& m, const Matrix& x) {
  Prediction p;
  const Matrix d = decision_function(m, x);
  if (!m.is_classifier()) {
    p.values = d.col(0);
    return p;
  }
  p.scores = d;
  p.labels.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < d.cols(); ++c)
      if (d(i, c) > d(i, best)) best = c;
    p.labels[static_cast<std::size_t>(i)] = m.classes[static_cast<std::size_t>(best)];
  }
  return p;
}

// ---------------------------------------------------------------------------
// Persistence: a line-oriented text format with shortest round-trip numbers.

inline constexpr std::string_view kModelFormatTag = "geocpet-model v1";

namespace detail {

inline void put_number(std::ostream& out, double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, p - buf);
}

inline void put_matrix(std::ostream& out, const char* name, const Matrix& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      put_number(out, m(i, j));
    }
    out << '\n';
  }
}

class ModelReader {
 public:
  explicit ModelReader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of file");
    return w;
  }
  void expect(std::string_view w) {
    const auto got = word();
    if (got != w) fail("expected '" + std::string(w) + "', got '" + got + "'");
  }
  double number() {
    const auto w = word();
    double v = 0.0;
    auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || p != w.data() + w.size()) fail("bad number '" + w + "'");
    return v;
  }
  long integer() {
    const auto w = word();
    long v = 0;
    auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || p != w.data() + w.size()) fail("bad integer '" + w + "'");
    return v;
  }
  Matrix matrix(std::string_view name) {
    expect(name);
    const long r = integer(), c = integer();
    if (r < 0 || c < 0) fail("negative matrix size");
    Matrix m(r, c);
    for (long i = 0; i < r; ++i)
      for (long j = 0; j < c; ++j) m(i, j) = number();
    return m;
  }
  [[noreturn]] void fail(const std::string& why) { throw Error(Errc::schema_error, "model file: " + why); }

 private:
  std::istream& in_;
};

}  // namespace detail

inline void save_model(const TrainedModel& m, std::ostream& out) {
  out << kModelFormatTag << '\n';
  out << "kind " << to_string(m.kind) << '\n';
  out << "kernel " << (m.kernel.kind == KernelKind::linear ? "linear" : "rbf") << ' ';
  detail::put_number(out, m.kernel.gamma.value_or(0.0));
  out << '\n';
  out << "dim " << m.dim << '\n';
  out << "classes " << m.classes.size();
  for (int c : m.classes) out << ' ' << c;
  out << '\n';
  detail::put_matrix(out, "weights", m.weights);
  detail::put_matrix(out, "support", m.support);
  out << "support_rows " << m.support_rows.size();
  for (auto r : m.support_rows) out << ' ' << r;
  out << '\n';
  detail::put_matrix(out, "coef", m.coef);
  detail::put_matrix(out, "bias", Matrix(m.bias));
  out << "end\n";
}

inline TrainedModel load_model(std::istream& in) {
  std::string tag;
  std::getline(in, tag);
  if (tag != kModelFormatTag) throw Error(Errc::schema_error, "model file: unknown format tag '" + tag + "'");
  detail::ModelReader r(in);
  TrainedModel m;
  r.expect("kind");
  const auto kind = r.word();
  if (kind == "linear_ls") m.kind = ModelKind::linear_ls;
  else if (kind == "svr") m.kind = ModelKind::svr;
  else if (kind == "svc") m.kind = ModelKind::svc;
  else r.fail("unknown model kind '" + kind + "'");
  r.expect("kernel");
  const auto kk = r.word();
  const double gamma = r.number();
  if (kk == "linear") m.kernel = {KernelKind::linear, std::nullopt};
  else if (kk == "rbf") m.kernel = {KernelKind::rbf, gamma};
  else r.fail("unknown kernel '" + kk + "'");
  r.expect("dim");
  m.dim = r.integer();
  r.expect("classes");
  const long nc = r.integer();
  for (long i = 0; i < nc; ++i) m.classes.push_back(static_cast<int>(r.integer()));
  m.weights = r.matrix("weights");
  m.support = r.matrix("support");
  r.expect("support_rows");
  const long ns = r.integer();
  if (ns != m.support.rows()) r.fail("support_rows count does not match support matrix");
  for (long i = 0; i < ns; ++i) m.support_rows.push_back(r.integer());
  m.coef = r.matrix("coef");
  m.bias = r.matrix("bias").col(0);
  r.expect("end");
  return m;
}

inline void save_model(const TrainedModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  save_model(m, out);
  if (!out) throw Error(Errc::io_error, "write failed for " + path.string());
}

inline TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_file, path.string());
  return load_model(in);
}

}  // namespace geocpet
