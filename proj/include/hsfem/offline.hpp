#pragma once

#include "hsfem/common.hpp"
#include "hsfem/detsolver.hpp"
#include "hsfem/field.hpp"
#include "hsfem/mesh.hpp"
#include "hsfem/stochastic.hpp"

#include <Eigen/SparseCholesky>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace hsfem {

struct OfflineOptions {
  int K = 50;                  ///< sketch forcings
  int r = 5;                   ///< held-out probe forcings
  double epsilon = 1e-2;       ///< probe test is epsilon / (10 sqrt(2/pi))
  std::uint64_t seed = 1;
  int coarse_cells = 0;        ///< 0: sample on the fine mesh
  bool allow_growth = false;   ///< double the sketch for saturated nodes
  int max_growth_rounds = 3;

  nlohmann::json to_json() const;
  static OfflineOptions from_json(const nlohmann::json& j);
};

/// Node-local stochastic bases xi_i^j, j = 1..k_i, for every interior node.
/// xi_i^0 = 1 is implicit.
struct LocalBasis {
  SampleSetPtr samples;
  std::vector<Matrix> xi;        ///< per interior node: M x k_i
  std::vector<int> k;
  std::vector<std::uint8_t> saturated;
  OfflineOptions options;
  int growth_rounds = 0;

  Index node_count() const { return static_cast<Index>(k.size()); }
  /// S = sum_i (k_i + 1)
  Index total_size() const;
  /// Position of (i, 0) in the coupled unknown vector (zero-based R(i, 0)).
  std::vector<Index> offsets() const;
  double average_k() const;
  int max_k() const;
  int saturated_count() const;
  /// [1, xi_i^1, ..., xi_i^{k_i}] as an M x (k_i + 1) matrix.
  Matrix extended(Index node) const;
  RandomFunction function(Index node, int j) const;
};

/// Samples the solution operator with K + r Gaussian forcings over `dict`,
/// builds each node's basis from the K x K Gram matrix of mean-removed traces
/// and picks k_i with the r probes. The dictionary must match the sampling
/// mesh (the coarse mesh when options.coarse_cells > 0).
LocalBasis build_local_basis(const Mesh& mesh, const CoefficientModel& model, SampleSetPtr samples,
                             const FourierDict& dict, const OfflineOptions& options);
LocalBasis build_local_basis(const Mesh& mesh, const CoefficientModel& model, SampleSetPtr samples,
                             const OfflineOptions& options);

/// Galerkin system over the coupling basis phi_i xi_i^j.
class CoupledSystem {
 public:
  CoupledSystem(MeshPtr mesh, CoefficientModel model, std::shared_ptr<const LocalBasis> basis, SparseMatrix sm);

  const Mesh& mesh() const { return *mesh_; }
  const MeshPtr& mesh_ptr() const { return mesh_; }
  const CoefficientModel& model() const { return model_; }
  const LocalBasis& basis() const { return *basis_; }
  const SampleSetPtr& samples() const { return basis_->samples; }
  const SparseMatrix& matrix() const { return sm_; }
  Index size() const { return sm_.rows(); }
  /// Zero-based R(i, j).
  Index index(Index node, int j) const { return offsets_[node] + j; }

  /// SM c = b to relative residual 1e-10.
  Vector solve(const Vector& b) const;

 private:
  MeshPtr mesh_;
  CoefficientModel model_;
  std::shared_ptr<const LocalBasis> basis_;
  std::vector<Index> offsets_;
  SparseMatrix sm_;
  Eigen::SimplicialLLT<SparseMatrix> llt_;
};

using CoupledSystemPtr = std::shared_ptr<const CoupledSystem>;

/// SM(R(i1,j1), R(i2,j2)) = sum_p w^p xi_i1^j1 xi_i2^j2 int grad phi_i1 . a grad phi_i2,
/// with a evaluated at element centroids. Throws NumericalError if SM is not SPD.
CoupledSystemPtr assemble_coupled(MeshPtr mesh, const CoefficientModel& model,
                                  std::shared_ptr<const LocalBasis> basis);

/// Explicit discretized T_i at one node: column q is the mean-removed trace of
/// the solution at the node for forcing Phi_q.
struct TMatrix {
  Matrix T;               ///< M x N
  Vector singular_values; ///< descending, weighted L^2(Omega) norm
  /// Number of singular values above eps.
  Index rank_at(double eps) const;
};

TMatrix tmatrix_explicit(const Mesh& mesh, const CoefficientModel& model, SampleSetPtr samples,
                         const FourierDict& dict, Index node);

/// Offline artifact: basis, coupled matrix and provenance. The sample set is
/// embedded and its hash recorded so later stages cannot mix sample sets.
struct OfflineArtifact {
  CoupledSystemPtr system;
  nlohmann::json config;
};

void save_artifact(const OfflineArtifact& artifact, const std::string& path);
OfflineArtifact load_artifact(const std::string& path);
/// k, S, k_i profile, saturation count and provenance as JSON.
nlohmann::json artifact_summary(const OfflineArtifact& artifact);

}  // namespace hsfem
