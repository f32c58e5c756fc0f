#pragma once

#include "hsfem/common.hpp"
#include "hsfem/detsolver.hpp"
#include "hsfem/online.hpp"

namespace hsfem {

/// Discrete Karhunen-Loeve expansion of an ensemble:
/// u(x_i, theta^p) = mean_i + sum_j sqrt(lambda_j) psi_j(x_i) xi_j(theta^p),
/// with psi_j orthonormal under the P1 mass matrix and xi_j orthonormal under
/// the sample weights.
struct KlDecomposition {
  Vector mean;         ///< n
  Matrix modes;        ///< n x r, psi_j
  Vector eigenvalues;  ///< r, lambda_j descending
  Matrix factors;      ///< M x r, xi_j
  double total_variance = 0.0;  ///< squared L^2(D x Omega) norm of u - mean
  /// Sum of the eigenvalues below the cutoff. Negative under signed weights,
  /// where the weighted covariance is indefinite.
  double discarded = 0.0;

  Index rank() const { return eigenvalues.size(); }
  Vector singular_values() const { return eigenvalues.cwiseSqrt(); }
  /// sqrt((sum_{j > k} lambda_j + discarded) / total)
  double tail_error(Index k) const;
};

/// Eigenvalues at or below 1e-14 lambda_1 are treated as zero. The M x M Gram
/// route is used when M < n and all weights are positive, the n x n mass-weighted
/// covariance otherwise.
KlDecomposition kl_expand(const Ensemble& ens);

/// Truncation error |u - u_k| / |u - mean| measured directly on the ensemble.
Metric e_kl(const KlDecomposition& kl, const Ensemble& ens, Index k);

/// Fractional k_match is truncated at floor and ceil; floor is the headline value.
struct KlMatch {
  double k_match = 0.0;
  Index k_floor = 0, k_ceil = 0;
  Metric floor, ceil;
};
KlMatch e_kl_match(const Ensemble& ens, double k_match);
Metric e_kl(const Ensemble& ens, double k_match);

}  // namespace hsfem
