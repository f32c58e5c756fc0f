#pragma once

#include <vector>

namespace hsfem {

/// One-dimensional rule: nodes ascending, weights summing to the measure's mass.
struct Rule1d {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [lo, hi], weights summing to hi - lo.
/// Nodes are exactly symmetric about the midpoint; odd rules hit it exactly.
Rule1d gauss_legendre(int n, double lo, double hi);

/// n-point Gauss-Hermite rule for the standard normal density (weights sum to 1).
Rule1d gauss_hermite_probabilists(int n);

}  // namespace hsfem
