#pragma once

namespace geocpet {

/// Numerical tolerances and iteration caps used across the library.
///
/// Every solver reads its limits from here; nothing else hard-codes them.
struct Tolerances {
  // SpdMatrix symmetry: max |A_ij - A_ji| <= symmetry_rel * max(1, max |A_ij|).
  double symmetry_rel = 1e-10;

  // Cyclic Jacobi: stop when off-diagonal Frobenius norm <= jacobi_offdiag_rel * ||A||_F.
  double jacobi_offdiag_rel = 1e-12;
  // Sweep cap is jacobi_sweep_factor * n^2.
  int jacobi_sweep_factor = 10;

  // Covariance estimates are rejected when lambda_min <= this * lambda_max.
  double covariance_min_rcond = 1e-12;

  // Karcher mean: stop when the Frechet gradient norm <= karcher_gradient_per_dim * n.
  double karcher_gradient_per_dim = 1e-7;
  // ... and the whitened gradient sum_i w_i log(C^{-1/2} C_i C^{-1/2}) is below this * n.
  double karcher_whitened_gradient_per_dim = 1e-9;
  int karcher_max_iterations = 100;
  int karcher_max_halvings = 5;

  // SMO dual solver.
  double svm_kkt = 1e-5;
  long svm_max_pair_updates = 1'000'000;

  // Relative singular-value threshold for rank detection in least squares.
  double ls_rank_rel = 1e-12;
};

inline constexpr Tolerances kTolerances{};

}  // namespace geocpet
