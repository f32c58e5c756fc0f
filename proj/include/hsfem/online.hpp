#pragma once

#include "hsfem/common.hpp"
#include "hsfem/detsolver.hpp"
#include "hsfem/field.hpp"
#include "hsfem/offline.hpp"

#include <string>
#include <utility>

namespace hsfem {

/// Scalar result that may be undefined (e.g. a relative error against a
/// deterministic reference); `reason` says why when `defined` is false.
struct Metric {
  bool defined = true;
  double value = 0.0;
  std::string reason;

  static Metric undefined(std::string why) { return {false, 0.0, std::move(why)}; }
};

/// b(R(i, j)) = E[xi_i^j] int phi_i f. Entries with j >= 1 below 1e-12 in
/// magnitude are set to exactly zero.
Vector load_vector(const CoupledSystem& system, const Forcing& f);

struct HsfemSolution {
  CoupledSystemPtr system;
  Vector c;             ///< length S, indexed by R(i, j)
  Vector load;          ///< int phi_i f over interior nodes, kept for fresh deterministic solves
  nlohmann::json forcing;

  /// c_i^0 per interior node.
  Vector mean() const;
  /// sqrt(sum_{j>=1} (c_i^j)^2) per interior node.
  Vector sd() const;
  /// u_h(x_i, theta^p) = sum_j c_i^j xi_i^j(theta^p), n_interior x M.
  Matrix materialize() const;
  /// u_h at interior nodes for a single sample.
  Vector at_sample(Index p) const;
};

HsfemSolution solve_online(CoupledSystemPtr system, const Forcing& f);

/// (mean, sd) over interior nodes, from the coefficients alone.
std::pair<Vector, Vector> statistics(const HsfemSolution& sol);

/// Weighted mean and standard deviation of a trace table (rows = nodes).
std::pair<Vector, Vector> trace_statistics(const Matrix& traces, const Vector& weights);

/// Squared L^2(D x Omega) norm of a trace table using the P1 mass matrix.
double space_time_norm2(const SparseMatrix& mass, const Matrix& traces, const Vector& weights);

/// Relative error of the stochastic part:
/// sqrt(sum_p w_p |u - u_h|_M^2) / sqrt(sum_p w_p |u - mean u|_M^2).
Metric e_hsfem(const HsfemSolution& sol, const Ensemble& reference);

}  // namespace hsfem
