#pragma once

// Weighted Frechet (Karcher) mean on the SPD manifold:
//   argmin_C  sum_i w_i d_R(C, C_i)^2

#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "geocpet/spd.hpp"

namespace geocpet {

/// Nonnegative weights normalized to sum to one.
class WeightVector {
 public:
  explicit WeightVector(std::vector<double> w) : w_(std::move(w)) {
    if (w_.empty()) throw Error(Errc::empty_input, "empty weight vector");
    raw_sum_ = 0.0;
    for (double x : w_) {
      if (!(x >= 0.0) || !std::isfinite(x)) {
        throw Error(Errc::schema_error, "weights must be finite and nonnegative");
      }
      raw_sum_ += x;
    }
    if (!(raw_sum_ > 0.0)) throw Error(Errc::schema_error, "weights sum to zero");
    for (double& x : w_) x /= raw_sum_;
  }

  static WeightVector uniform(std::size_t m) { return WeightVector(std::vector<double>(m, 1.0)); }

  std::span<const double> weights() const { return w_; }
  double operator[](std::size_t i) const { return w_[i]; }
  std::size_t size() const { return w_.size(); }
  double raw_sum() const { return raw_sum_; }

 private:
  std::vector<double> w_;
  double raw_sum_ = 0.0;
};

struct MeanSolverReport {
  int iterations = 0;
  double final_gradient_norm = 0.0;
  bool converged = false;
};

struct MeanResult {
  SpdMatrix mean;
  MeanSolverReport report;
};

/// Raised when the Karcher iteration hits its cap; carries the solver report.
class MeanNoConvergence : public Error {
 public:
  MeanNoConvergence(const MeanSolverReport& r, SpdMatrix last)
      : Error(Errc::no_convergence,
              "Karcher mean after " + std::to_string(r.iterations) + " iterations, gradient " +
                  std::to_string(r.final_gradient_norm)),
        report_(r),
        last_(std::move(last)) {}
  const MeanSolverReport& report() const { return report_; }
  const SpdMatrix& last_iterate() const { return last_; }

 private:
  MeanSolverReport report_;
  SpdMatrix last_;
};

/// Point at parameter t on the geodesic from c1 (t=0) to c2 (t=1):
/// C1^{1/2} (C1^{-1/2} C2 C1^{-1/2})^t C1^{1/2}.
inline SpdMatrix geodesic_point(const SpdMatrix& c1, const SpdMatrix& c2, double t) {
  require_same_dim(c1.dim(), c2.dim());
  if (t == 0.0) return c1;
  if (t == 1.0) return c2;
  const ReferencePoint ref(c1);
  return SpdMatrix(ref.color(matrix_fn(ref.whiten(c2.values()), SpectralFunction::pow, t)));
}

namespace detail {

inline void validate_inputs(std::span<const SpdMatrix> mats, const WeightVector& w) {
  if (mats.empty()) throw Error(Errc::empty_input, "no matrices to average");
  if (mats.size() != w.size()) {
    throw Error(Errc::dimension_mismatch, std::to_string(mats.size()) + " matrices but " +
                                              std::to_string(w.size()) + " weights");
  }
  for (const auto& m : mats) require_same_dim(mats.front().dim(), m.dim());
}

struct FrechetState {
  Matrix whitened_gradient;  // sum_i w_i log(C^{-1/2} C_i C^{-1/2})
  double objective = 0.0;    // sum_i w_i d_R(C, C_i)^2
};

inline FrechetState frechet_state(const ReferencePoint& ref, std::span<const SpdMatrix> mats,
                                  const WeightVector& w) {
  const auto n = ref.dim();
  FrechetState s{Matrix::Zero(n, n), 0.0};
  for (std::size_t i = 0; i < mats.size(); ++i) {
    if (w[i] == 0.0) continue;
    const Matrix l = ref.whitened_log(mats[i]);
    s.whitened_gradient += w[i] * l;
    s.objective += w[i] * l.squaredNorm();
  }
  return s;
}

}  // namespace detail

/// ||sum_i w_i Log_C(C_i)||_F, the first-order optimality residual at C.
inline double frechet_gradient_norm(const SpdMatrix& c, std::span<const SpdMatrix> mats,
                                    const WeightVector& w) {
  detail::validate_inputs(mats, w);
  const ReferencePoint ref(c);
  return ref.color(detail::frechet_state(ref, mats, w).whitened_gradient).norm();
}

/// Fixed-point Karcher iteration C <- Exp_C(sum_i w_i Log_C(C_i)), with step
/// halving when the Frechet objective increases. Always runs the general
/// solver; weighted_riemannian_mean short-circuits the small cases.
inline MeanResult karcher_mean(std::span<const SpdMatrix> mats, const WeightVector& w,
                               const Tolerances& tol = kTolerances) {
  detail::validate_inputs(mats, w);
  const auto n = mats.front().dim();
  const double gtol = tol.karcher_gradient_per_dim * static_cast<double>(n);
  const double wtol = tol.karcher_whitened_gradient_per_dim * static_cast<double>(n);

  Matrix init = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < mats.size(); ++i) init += w[i] * mats[i].values();
  SpdMatrix current(init);
  ReferencePoint ref(current);
  detail::FrechetState state = detail::frechet_state(ref, mats, w);

  MeanSolverReport report;
  for (;;) {
    const double ambient = ref.color(state.whitened_gradient).norm();
    const double whitened = state.whitened_gradient.norm();
    report.final_gradient_norm = ambient;
    if (ambient <= gtol && whitened <= wtol) {
      report.converged = true;
      return {current, report};
    }
    if (report.iterations >= tol.karcher_max_iterations) {
      throw MeanNoConvergence(report, current);
    }
    ++report.iterations;

    double step = 1.0;
    for (int halving = 0;; ++halving) {
      SpdMatrix candidate(ref.color(matrix_exp(step * state.whitened_gradient)));
      ReferencePoint cand_ref(candidate);
      detail::FrechetState cand_state = detail::frechet_state(cand_ref, mats, w);
      if (cand_state.objective <= state.objective || halving >= tol.karcher_max_halvings) {
        current = std::move(candidate);
        ref = std::move(cand_ref);
        state = std::move(cand_state);
        break;
      }
      step *= 0.5;
    }
  }
}

/// Weighted Riemannian mean. One matrix returns itself; two matrices use the
/// closed-form geodesic point at t = w_2; more go through karcher_mean.
inline MeanResult weighted_riemannian_mean(std::span<const SpdMatrix> mats, const WeightVector& w,
                                           const Tolerances& tol = kTolerances) {
  detail::validate_inputs(mats, w);
  if (mats.size() == 1) return {mats.front(), MeanSolverReport{0, 0.0, true}};
  if (mats.size() == 2) {
    SpdMatrix m = geodesic_point(mats[0], mats[1], w[1]);
    const double g = frechet_gradient_norm(m, mats, w);
    return {std::move(m), MeanSolverReport{0, g, true}};
  }
  return karcher_mean(mats, w, tol);
}

inline SpdMatrix unweighted_riemannian_mean(std::span<const SpdMatrix> mats,
                                            const Tolerances& tol = kTolerances) {
  if (mats.empty()) throw Error(Errc::empty_input, "no matrices to average");
  return weighted_riemannian_mean(mats, WeightVector::uniform(mats.size()), tol).mean;
}

}  // namespace geocpet
