#pragma once

#include "hsfem/common.hpp"
#include "hsfem/random.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace hsfem {

/// Euclidean inner product, or the weighted sum sum_p w_p f_p g_p used for
/// L^2(Omega) on a sample set. Weights may be negative (sparse grids); norms
/// clamp negative round-off to zero.
class InnerProduct {
 public:
  InnerProduct() = default;
  explicit InnerProduct(Vector weights) : weights_(std::move(weights)) {}

  bool euclidean() const { return !weights_.has_value(); }
  const Vector* weights() const { return weights_ ? &*weights_ : nullptr; }
  double dot(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) const;
  double norm(const Eigen::Ref<const Vector>& a) const;
  /// Q^T W x
  Vector project(const Matrix& Q, const Eigen::Ref<const Vector>& x) const;
  /// Q^T W Q
  Matrix gram(const Matrix& Q) const;

 private:
  std::optional<Vector> weights_;
};

/// Linear operator R^N -> (R^out, inner product) known only through products.
class MatVecOperator {
 public:
  using BlockApply = std::function<Matrix(const Matrix&)>;

  MatVecOperator(Index input_dim, Index output_dim, BlockApply apply, InnerProduct ip = {})
      : in_(input_dim), out_(output_dim), apply_(std::move(apply)), ip_(std::move(ip)) {}
  static MatVecOperator from_matrix(Matrix A, InnerProduct ip = {});

  Index input_dim() const { return in_; }
  Index output_dim() const { return out_; }
  const InnerProduct& inner_product() const { return ip_; }
  /// Applies the operator to every column.
  Matrix apply(const Matrix& V) const;

 private:
  Index in_, out_;
  BlockApply apply_;
  InnerProduct ip_;
};

struct RangeBasis {
  Matrix Q;                 ///< output_dim x k, orthonormal under the operator's inner product
  double threshold = 0.0;   ///< the probe test epsilon / (10 sqrt(2/pi))
  double achieved = 0.0;    ///< largest probe residual norm at exit
  Index probes_used = 0;
  bool saturated = false;   ///< no candidate size passed the probe test
  int growth_rounds = 0;
  std::vector<double> probe_history;  ///< max probe residual per iteration / candidate size

  Index size() const { return Q.cols(); }
};

/// epsilon / (10 sqrt(2/pi))
double probe_threshold(double epsilon);

/// alpha sqrt(2/pi) max_i ||B omega_i|| over the columns of `probes`.
double aposteriori_bound(const MatVecOperator& op_residual, const Matrix& probes, double alpha = 10.0);
/// Same with r fresh standard Gaussian probes.
double aposteriori_bound(const MatVecOperator& op_residual, int r, double alpha, std::uint64_t seed);

/// Adaptive randomized range finder: grows Q one vector at a time until r
/// consecutive probe residuals fall below probe_threshold(epsilon).
/// Throws NumericalError if more than max_iterations (default N) vectors are needed.
RangeBasis adaptive_range_finder(const MatVecOperator& op, double epsilon, int r, std::uint64_t seed,
                                 Index max_iterations = -1);

/// Sketch-based finder: Q = leading gamma left singular vectors of W = A Omega
/// (K Gaussian columns), gamma minimal so that r held-out probes pass. With
/// allow_growth the sketch doubles until a size passes or `max_columns` would be exceeded.
RangeBasis svd_range_finder(const MatVecOperator& op, double epsilon, int r, Index K, std::uint64_t seed,
                            bool allow_growth, Index max_columns = 4096);

/// Left singular vectors of W under `ip`, ordered by decreasing singular value.
/// Nonnegative weights go through an SVD of diag(sqrt w) W and drop
/// sigma <= cutoff * sigma_1. Otherwise the K x K Gram matrix is diagonalized
/// and eigenvalues lambda <= cutoff * lambda_1 are dropped. Each column is
/// signed so its first non-negligible entry is positive.
void weighted_svd(const Matrix& W, const InnerProduct& ip, Matrix& U, Vector& sigma, double cutoff = 1e-14);

/// Flips each column so its first entry of magnitude above 1e-12 * max|column| is positive.
void normalize_signs(Matrix& U);

/// Re-orthonormalizes the columns of U in order (classical Gram-Schmidt, two
/// passes) under `ip`. Leading subspaces are preserved.
void reorthonormalize(Matrix& U, const InnerProduct& ip);

/// Smallest gamma in [0, U.cols()] such that every probe column has residual
/// norm <= threshold after projecting out U[:, :gamma]; -1 if none does.
/// `history` (optional) receives the max residual for gamma = 0..U.cols().
Index minimal_passing_size(const Matrix& U, const Matrix& probes, const InnerProduct& ip, double threshold,
                           std::vector<double>* history = nullptr);

}  // namespace hsfem
