#include "hsfem/quadrature.hpp"

#include "hsfem/common.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace hsfem {

namespace {

// Golub-Welsch: eigenvalues of the symmetric Jacobi matrix are the nodes,
// squared first eigenvector components (times the total mass) the weights.
Rule1d golub_welsch(int n, const std::vector<double>& offdiag, double mass) {
  if (n < 1) throw ConfigError("quadrature rule needs at least one point");
  Matrix jacobi = Matrix::Zero(n, n);
  for (int k = 0; k + 1 < n; ++k) jacobi(k, k + 1) = jacobi(k + 1, k) = offdiag[k];
  Eigen::SelfAdjointEigenSolver<Matrix> eig(jacobi);
  if (eig.info() != Eigen::Success) throw NumericalError("Golub-Welsch eigensolve failed");
  Rule1d rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int k = 0; k < n; ++k) {
    rule.nodes[k] = eig.eigenvalues()[k];
    const double v = eig.eigenvectors()(0, k);
    rule.weights[k] = mass * v * v;
  }
  // Symmetrize so paired nodes are exact negatives and the odd middle node is 0.
  for (int k = 0; k < n / 2; ++k) {
    const double x = 0.5 * (rule.nodes[n - 1 - k] - rule.nodes[k]);
    const double w = 0.5 * (rule.weights[k] + rule.weights[n - 1 - k]);
    rule.nodes[k] = -x;
    rule.nodes[n - 1 - k] = x;
    rule.weights[k] = rule.weights[n - 1 - k] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

}  // namespace

Rule1d gauss_legendre(int n, double lo, double hi) {
  std::vector<double> beta(n > 0 ? n - 1 : 0);
  for (int k = 1; k < n; ++k) beta[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
  Rule1d ref = golub_welsch(n, beta, 2.0);
  const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
  for (int k = 0; k < n; ++k) {
    ref.nodes[k] = mid + half * ref.nodes[k];
    ref.weights[k] *= half;
  }
  return ref;
}

Rule1d gauss_hermite_probabilists(int n) {
  std::vector<double> beta(n > 0 ? n - 1 : 0);
  for (int k = 1; k < n; ++k) beta[k - 1] = std::sqrt(static_cast<double>(k));
  return golub_welsch(n, beta, 1.0);
}

}  // namespace hsfem
