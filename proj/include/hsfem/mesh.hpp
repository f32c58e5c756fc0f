#pragma once

#include "hsfem/common.hpp"

#include <Eigen/Sparse>

#include <array>
#include <string>
#include <vector>

namespace hsfem {

using Point = std::array<double, 2>;  ///< y is ignored in 1D

/// Uniform P1 mesh of the unit interval (intervals) or unit square (right
/// triangles, every cell cut along its lower-left to upper-right diagonal).
///
/// Nodes are numbered row-major: node (ix, iy) has id iy * (cells + 1) + ix.
/// Interior nodes carry the unknowns; they are numbered in increasing node id
/// order, which fixes the coupling-basis relabeling downstream.
class Mesh {
 public:
  /// `cells` = 1/h along each axis.
  static Mesh uniform(int dim, int cells);
  /// Validates that 1/h is a positive integer (to 1e-9 relative).
  static Mesh uniform(int dim, double h);

  int dim() const { return dim_; }
  int cells() const { return cells_; }
  double h() const { return 1.0 / cells_; }
  int vertices_per_element() const { return dim_ + 1; }

  Index node_count() const { return static_cast<Index>(nodes_.size()); }
  Index element_count() const { return static_cast<Index>(elements_.size()); }
  Index interior_count() const { return static_cast<Index>(interior_nodes_.size()); }

  const Point& node(Index i) const { return nodes_[i]; }
  const std::vector<int>& element(Index e) const { return elements_[e]; }
  bool is_interior(Index node) const { return interior_index_[node] >= 0; }
  /// -1 for boundary nodes.
  Index interior_index(Index node) const { return interior_index_[node]; }
  Index interior_node(Index k) const { return interior_nodes_[k]; }

  double element_measure(Index e) const { return measure_[e]; }
  /// Constant gradient of the local hat function `local` on element e.
  const Point& gradient(Index e, int local) const { return grads_[e][local]; }
  Point centroid(Index e) const;

  /// Element holding x and the barycentric coordinates of x in it. Points on
  /// grid lines get exact 0/1 weights.
  Index locate(const Point& x, std::array<double, 3>& bary) const;

  /// Consistent P1 mass matrix restricted to interior nodes.
  Eigen::SparseMatrix<double> interior_mass_matrix() const;
  /// P1 stiffness matrix (a = 1) restricted to interior nodes.
  Eigen::SparseMatrix<double> interior_laplacian() const;

  /// Sparse interpolation operator mapping this mesh's interior values to
  /// point values at the interior nodes of `fine` (boundary values are zero).
  Eigen::SparseMatrix<double> interior_interpolation_to(const Mesh& fine) const;

  /// Debug dump: {"dim","h","nodes":[[x,y]...],"elements":[[...]...],"interior":[...]}.
  std::string to_json() const;

 private:
  int dim_ = 1;
  int cells_ = 1;
  std::vector<Point> nodes_;
  std::vector<std::vector<int>> elements_;
  std::vector<double> measure_;
  std::vector<std::array<Point, 3>> grads_;
  std::vector<Index> interior_index_;
  std::vector<Index> interior_nodes_;
};

/// Piecewise-linear function on a mesh given by nodal values.
class P1Function {
 public:
  P1Function(const Mesh& mesh, Vector nodal_values);
  double operator()(const Point& x) const;
  const Vector& nodal_values() const { return values_; }

 private:
  const Mesh* mesh_;
  Vector values_;
};

/// Builds the P1 interpolant; nodal_values must have one entry per mesh node.
P1Function interp_p1(const Mesh& mesh, const Vector& nodal_values);

/// Scatters interior values into a full nodal vector with zero boundary values.
Vector extend_by_zero(const Mesh& mesh, const Vector& interior_values);

/// Quadrature on a reference element mapped to element e: points and weights
/// (weights already scaled by the element measure).
struct ElementQuadrature {
  std::vector<Point> points;
  std::vector<double> weights;
  std::vector<std::array<double, 3>> bary;  ///< hat-function values at each point
};

/// Gauss rule with `order` points per direction (collapsed tensor rule on triangles).
ElementQuadrature element_quadrature(const Mesh& mesh, Index e, int order);

}  // namespace hsfem
