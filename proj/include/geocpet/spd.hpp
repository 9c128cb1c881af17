#pragma once

// Affine-invariant geometry on the cone of symmetric positive definite matrices.
//
// All matrix functions are evaluated spectrally, f(A) = Q diag(f(lambda)) Q^T,
// on top of a cyclic Jacobi eigensolver. Values are immutable after construction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geocpet/config.hpp"
#include "geocpet/error.hpp"
#include "geocpet/rng.hpp"

namespace geocpet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct EigenDecomposition {
  Vector eigenvalues;   // descending
  Matrix eigenvectors;  // columns, orthonormal
};

inline double max_abs_entry(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline double asymmetry(const Matrix& a) {
  return a.rows() == 0 ? 0.0 : (a - a.transpose()).cwiseAbs().maxCoeff();
}

inline bool is_symmetric(const Matrix& a, const Tolerances& tol = kTolerances) {
  if (a.rows() != a.cols()) return false;
  return asymmetry(a) <= tol.symmetry_rel * std::max(1.0, max_abs_entry(a));
}

inline void require_symmetric(const Matrix& a, const Tolerances& tol = kTolerances) {
  if (a.rows() != a.cols()) {
    throw Error(Errc::dimension_mismatch,
                "matrix is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  if (!is_symmetric(a, tol)) {
    throw Error(Errc::non_symmetric, "asymmetry " + std::to_string(asymmetry(a)));
  }
}

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Stops once the off-diagonal Frobenius norm falls below
/// `jacobi_offdiag_rel * ||A||_F`; throws NoConvergence after
/// `jacobi_sweep_factor * n^2` sweeps.
inline EigenDecomposition sym_eig(const Matrix& input, const Tolerances& tol = kTolerances) {
  require_symmetric(input, tol);
  const Eigen::Index n = input.rows();
  Matrix a = symmetrize(input);
  Matrix v = Matrix::Identity(n, n);

  const double norm = a.norm();
  const double threshold = tol.jacobi_offdiag_rel * norm;
  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  const long max_sweeps = static_cast<long>(tol.jacobi_sweep_factor) * n * n;
  long sweep = 0;
  while (norm > 0.0 && off_norm() > threshold) {
    if (sweep++ >= max_sweeps) {
      throw Error(Errc::no_convergence,
                  "Jacobi eigensolver exceeded " + std::to_string(max_sweeps) + " sweeps");
    }
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });
  EigenDecomposition out{Vector(n), Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = order[static_cast<std::size_t>(i)];
    out.eigenvalues(i) = a(src, src);
    out.eigenvectors.col(i) = v.col(src);
  }
  return out;
}

/// Q diag(f(lambda)) Q^T, returned exactly symmetric.
template <class F>
Matrix apply_spectral(const EigenDecomposition& eig, F&& f) {
  Vector mapped(eig.eigenvalues.size());
  for (Eigen::Index i = 0; i < mapped.size(); ++i) mapped(i) = f(eig.eigenvalues(i));
  return symmetrize(eig.eigenvectors * mapped.asDiagonal() * eig.eigenvectors.transpose());
}

/// Symmetric positive definite matrix. Construction validates symmetry and
/// strict positivity of the spectrum; nothing is repaired silently.
class SpdMatrix {
 public:
  explicit SpdMatrix(const Matrix& values, const Tolerances& tol = kTolerances)
      : values_(values), eig_() {
    require_symmetric(values, tol);
    values_ = symmetrize(values);
    if (values_.rows() == 0) throw Error(Errc::empty_input, "SPD matrix of order 0");
    eig_ = sym_eig(values_, tol);
    const double lmin = eig_.eigenvalues(eig_.eigenvalues.size() - 1);
    if (!(lmin > 0.0) || !std::isfinite(eig_.eigenvalues(0))) {
      throw Error(Errc::not_positive_definite,
                  "smallest eigenvalue " + std::to_string(lmin));
    }
  }

  static SpdMatrix identity(Eigen::Index n) { return SpdMatrix(Matrix::Identity(n, n)); }

  Eigen::Index dim() const { return values_.rows(); }
  const Matrix& values() const { return values_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return values_(i, j); }
  const EigenDecomposition& spectrum() const { return eig_; }
  double min_eigenvalue() const { return eig_.eigenvalues(eig_.eigenvalues.size() - 1); }

  /// Content hash, used to tag tangent vectors with their reference point.
  std::uint64_t fingerprint() const {
    return fnv1a(values_.data(), sizeof(double) * static_cast<std::size_t>(values_.size()));
  }

  Matrix sqrt() const { return apply_spectral(eig_, [](double x) { return std::sqrt(x); }); }
  Matrix inv_sqrt() const {
    return apply_spectral(eig_, [](double x) { return 1.0 / std::sqrt(x); });
  }
  Matrix log() const { return apply_spectral(eig_, [](double x) { return std::log(x); }); }
  Matrix pow(double t) const {
    return apply_spectral(eig_, [t](double x) { return std::pow(x, t); });
  }
  Matrix inverse() const { return apply_spectral(eig_, [](double x) { return 1.0 / x; }); }

 private:
  Matrix values_;
  EigenDecomposition eig_;
};

enum class SpectralFunction { log, exp, sqrt, inv_sqrt, pow };

/// Applies a scalar function to the spectrum of a symmetric matrix.
/// `exponent` is used only by SpectralFunction::pow.
inline Matrix matrix_fn(const Matrix& a, SpectralFunction f, double exponent = 1.0,
                        const Tolerances& tol = kTolerances) {
  const EigenDecomposition eig = sym_eig(a, tol);
  if (f != SpectralFunction::exp) {
    const double lmin = eig.eigenvalues(eig.eigenvalues.size() - 1);
    if (!(lmin > 0.0)) {
      throw Error(Errc::not_positive_definite,
                  "eigenvalue " + std::to_string(lmin) + " in domain of log/sqrt/pow");
    }
  }
  switch (f) {
    case SpectralFunction::log: return apply_spectral(eig, [](double x) { return std::log(x); });
    case SpectralFunction::exp: return apply_spectral(eig, [](double x) { return std::exp(x); });
    case SpectralFunction::sqrt: return apply_spectral(eig, [](double x) { return std::sqrt(x); });
    case SpectralFunction::inv_sqrt:
      return apply_spectral(eig, [](double x) { return 1.0 / std::sqrt(x); });
    case SpectralFunction::pow:
      return apply_spectral(eig, [exponent](double x) { return std::pow(x, exponent); });
  }
  return {};
}

inline Matrix matrix_log(const SpdMatrix& c) { return c.log(); }
inline Matrix matrix_exp(const Matrix& s) { return matrix_fn(s, SpectralFunction::exp); }

inline void require_same_dim(Eigen::Index a, Eigen::Index b) {
  if (a != b) {
    throw Error(Errc::dimension_mismatch,
                "orders " + std::to_string(a) + " and " + std::to_string(b));
  }
}

/// Precomputed square root and inverse square root of a reference point.
/// Projecting many matrices against one reference goes through this.
class ReferencePoint {
 public:
  explicit ReferencePoint(const SpdMatrix& ref)
      : ref_(ref), sqrt_(ref.sqrt()), inv_sqrt_(ref.inv_sqrt()) {}

  const SpdMatrix& matrix() const { return ref_; }
  const Matrix& sqrt() const { return sqrt_; }
  const Matrix& inv_sqrt() const { return inv_sqrt_; }
  Eigen::Index dim() const { return ref_.dim(); }

  /// C^{-1/2} X C^{-1/2}, symmetrized.
  Matrix whiten(const Matrix& x) const { return symmetrize(inv_sqrt_ * x * inv_sqrt_); }
  /// C^{1/2} X C^{1/2}, symmetrized.
  Matrix color(const Matrix& x) const { return symmetrize(sqrt_ * x * sqrt_); }

  /// log(C^{-1/2} B C^{-1/2}): the tangent vector at C in whitened coordinates.
  Matrix whitened_log(const SpdMatrix& b) const {
    require_same_dim(dim(), b.dim());
    return matrix_fn(whiten(b.values()), SpectralFunction::log);
  }

 private:
  SpdMatrix ref_;
  Matrix sqrt_;
  Matrix inv_sqrt_;
};

/// Affine-invariant distance ||log(A^{-1/2} B A^{-1/2})||_F.
inline double riemannian_distance(const SpdMatrix& a, const SpdMatrix& b) {
  require_same_dim(a.dim(), b.dim());
  const Matrix w = symmetrize(a.inv_sqrt() * b.values() * a.inv_sqrt());
  const EigenDecomposition eig = sym_eig(w);
  double s = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues.size(); ++i) {
    const double l = eig.eigenvalues(i);
    if (!(l > 0.0)) throw Error(Errc::not_positive_definite, "whitened eigenvalue <= 0");
    s += std::log(l) * std::log(l);
  }
  return std::sqrt(s);
}

/// Riemannian logarithm at `ref`: C^{1/2} log(C^{-1/2} Ci C^{-1/2}) C^{1/2}.
inline Matrix log_map(const ReferencePoint& ref, const SpdMatrix& ci) {
  return ref.color(ref.whitened_log(ci));
}
inline Matrix log_map(const SpdMatrix& ref, const SpdMatrix& ci) {
  return log_map(ReferencePoint(ref), ci);
}

/// Riemannian exponential at `ref`: C^{1/2} exp(C^{-1/2} S C^{-1/2}) C^{1/2}.
inline SpdMatrix exp_map(const ReferencePoint& ref, const Matrix& s) {
  require_symmetric(s);
  require_same_dim(ref.dim(), s.rows());
  return SpdMatrix(ref.color(matrix_exp(ref.whiten(s))));
}
inline SpdMatrix exp_map(const SpdMatrix& ref, const Matrix& s) {
  return exp_map(ReferencePoint(ref), s);
}

// ---------------------------------------------------------------------------
// Tangent-space vectorization

/// How off-diagonal entries enter the upper-triangular vectorization.
/// `weighted` scales them by sqrt(2) so the Euclidean norm of the vector equals
/// the Frobenius norm of the symmetric matrix.
enum class UpperWeighting { weighted, unweighted };

struct TangentVector {
  Eigen::Index dim_src = 0;
  Vector coords;
  std::uint64_t reference_id = 0;
};

constexpr Eigen::Index upper_length(Eigen::Index n) { return n * (n + 1) / 2; }

/// Row-major upper triangle, diagonal first within each row.
inline Vector upper_vectorize(const Matrix& s, UpperWeighting w = UpperWeighting::weighted) {
  const Eigen::Index n = s.rows();
  const double scale = w == UpperWeighting::weighted ? std::numbers::sqrt2 : 1.0;
  Vector out(upper_length(n));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    out(k++) = s(i, i);
    for (Eigen::Index j = i + 1; j < n; ++j) out(k++) = scale * s(i, j);
  }
  return out;
}

/// Inverse of upper_vectorize.
inline Matrix upper_unvectorize(const Vector& v, UpperWeighting w = UpperWeighting::weighted) {
  const auto len = v.size();
  const auto n = static_cast<Eigen::Index>(
      std::lround((std::sqrt(8.0 * static_cast<double>(len) + 1.0) - 1.0) / 2.0));
  if (upper_length(n) != len) {
    throw Error(Errc::dimension_mismatch,
                "length " + std::to_string(len) + " is not a triangular number");
  }
  const double scale = w == UpperWeighting::weighted ? std::numbers::sqrt2 : 1.0;
  Matrix s(n, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    s(i, i) = v(k++);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      s(i, j) = s(j, i) = v(k++) / scale;
    }
  }
  return s;
}

/// upper(C^{-1/2} Log_C(Ci) C^{-1/2}). The whitened form collapses to
/// log(C^{-1/2} Ci C^{-1/2}), which is what is evaluated.
inline TangentVector tangent_project(const ReferencePoint& ref, const SpdMatrix& ci,
                                     UpperWeighting w = UpperWeighting::weighted) {
  return TangentVector{ci.dim(), upper_vectorize(ref.whitened_log(ci), w),
                       ref.matrix().fingerprint()};
}
inline TangentVector tangent_project(const SpdMatrix& ref, const SpdMatrix& ci,
                                     UpperWeighting w = UpperWeighting::weighted) {
  return tangent_project(ReferencePoint(ref), ci, w);
}

/// Maps a tangent vector back onto the manifold: C^{1/2} exp(unvec(V)) C^{1/2}.
inline SpdMatrix tangent_unproject(const ReferencePoint& ref, const TangentVector& v,
                                   UpperWeighting w = UpperWeighting::weighted) {
  require_same_dim(ref.dim(), v.dim_src);
  return SpdMatrix(ref.color(matrix_exp(upper_unvectorize(v.coords, w))));
}

}  // namespace geocpet
