#pragma once

#include "hsfem/common.hpp"
#include "hsfem/field.hpp"
#include "hsfem/mesh.hpp"
#include "hsfem/stochastic.hpp"

#include <Eigen/SparseCholesky>
#include <nlohmann/json.hpp>

#include <functional>
#include <memory>
#include <string>

namespace hsfem {

using MeshPtr = std::shared_ptr<const Mesh>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Interior stiffness matrix with a fixed sparsity pattern. Stored value k of
/// the pattern equals sum_e G(k, e) a_e, where a_e is the coefficient at the
/// centroid of element e and G holds int_e grad phi_i . grad phi_j.
class StiffnessAssembler {
 public:
  explicit StiffnessAssembler(const Mesh& mesh);

  const SparseMatrix& pattern() const { return pattern_; }
  Index slot_count() const { return pattern_.nonZeros(); }
  /// Row and column of stored value k (column-major storage order).
  Index slot_row(Index k) const { return slot_row_[k]; }
  Index slot_col(Index k) const { return slot_col_[k]; }
  /// nnz x E geometric weights.
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& element_map() const { return map_; }

  /// Overwrites A (which must share the pattern) with values for the given coefficients.
  void assemble(const Eigen::Ref<const Vector>& element_coef, SparseMatrix& A) const;
  SparseMatrix assemble(const Eigen::Ref<const Vector>& element_coef) const;

 private:
  SparseMatrix pattern_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> map_;
  std::vector<Index> slot_row_, slot_col_;
};

/// One sparse LDL^T factorization per coefficient realization, reused for any
/// number of right-hand sides. The symbolic analysis is done once.
class DeterministicSolver {
 public:
  explicit DeterministicSolver(std::shared_ptr<const StiffnessAssembler> assembler);

  void factorize(const Eigen::Ref<const Vector>& element_coef);
  /// Solves A U = B column-wise. Columns whose relative residual exceeds
  /// `tolerance` after refinement raise NumericalError.
  Matrix solve(const Matrix& rhs) const;

  const SparseMatrix& matrix() const { return A_; }
  static constexpr double tolerance = 1e-10;

 private:
  std::shared_ptr<const StiffnessAssembler> assembler_;
  SparseMatrix A_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
};

/// Full nodal solution (boundary entries 0) for one realization theta.
Vector solve_deterministic(const Mesh& mesh, const CoefficientModel& model, const Vector& theta, const Forcing& f);

/// Solves every realization in `thetas` (rows) against the same n x R right-hand
/// sides and calls sink(p, U) with the n x R interior solution of row p. Runs
/// in parallel; sink must only write into per-p state. Failures are reported
/// with the offending row index.
void solve_samples(const Mesh& mesh, const CoefficientModel& model, const Matrix& thetas, const Matrix& rhs,
                   const std::function<void(Index, const Matrix&)>& sink);

/// Solution traces u(x_i, theta^p) at interior nodes for a whole sample set.
struct Ensemble {
  MeshPtr mesh;
  SampleSetPtr samples;
  nlohmann::json forcing;
  Matrix values;  ///< n_interior x M
};

Ensemble solve_ensemble(MeshPtr mesh, const CoefficientModel& model, SampleSetPtr samples, const Forcing& f);

/// Binary table plus metadata; the sample set is embedded so the file is self-contained.
void save_ensemble(const Ensemble& ens, const std::string& path);
Ensemble load_ensemble(const std::string& path);

}  // namespace hsfem
