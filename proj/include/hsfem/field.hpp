#pragma once

#include "hsfem/common.hpp"
#include "hsfem/mesh.hpp"
#include "hsfem/stochastic.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <string>

namespace hsfem {

enum class CoefficientKind {
  TrigLognormal1d,    ///< log a = sum_k cos(2 pi k x) w_k, w_k ~ U(-1/2, 1/2)
  Normalized1d,       ///< log a = sum_k (scale/m) cos(2 pi k x) w_k, a in [e^-scale/2, e^scale/2]
  TrigLognormal2d,    ///< log a = 1 + 1/4 sum_k w_k (sin(k pi x) + cos((m+1-k) pi y)), Gaussian
  Piecewise2d,        ///< quadrant-wise expansion with offsets 0..3, m = 12, Gaussian
  TensorLognormal2d,  ///< log a = amp * sum w_i 2 sin(2 pi a x) cos(2 pi b y), Gaussian
  Constant,
};

/// Random diffusion coefficient a(x, omega). Every supported model is
/// log-affine in omega: log a(x, theta) = offset(x) + sum_k basis_k(x) theta_k,
/// which lets assembly evaluate all samples with one matrix product.
struct CoefficientModel {
  CoefficientKind kind = CoefficientKind::Constant;
  int m = 0;
  double scale = 20.0;      ///< Normalized1d numerator
  double amplitude = 0.5;   ///< TensorLognormal2d prefactor
  double value = 1.0;       ///< Constant
  int freq_x = 6, freq_y = 6;  ///< TensorLognormal2d mode grid, m = freq_x * freq_y

  int dim() const;
  Measure natural_measure() const;

  /// offset(x) and basis_k(x), k = 0..m-1.
  double log_terms(const Point& x, Eigen::Ref<Vector> basis) const;
  /// exp(log a), with the exponent clamped to +-690 (about 1e+-300).
  double eval(const Point& x, const Eigen::Ref<const Vector>& theta) const;

  nlohmann::json to_json() const;
  static CoefficientModel from_json(const nlohmann::json& j);
};

double eval_coefficient(const CoefficientModel& model, const Point& x, const Vector& theta);

/// Coefficient restricted to element centroids of one mesh, for all samples.
class CentroidCoefficients {
 public:
  CentroidCoefficients(const Mesh& mesh, const CoefficientModel& model);
  Index element_count() const { return offset_.size(); }
  /// a at every centroid for one sample. Throws ModelError if any value is not
  /// strictly positive and finite.
  void evaluate(const Eigen::Ref<const Vector>& theta, Eigen::Ref<Vector> out) const;
  /// E x M table for a whole sample set.
  Matrix evaluate_all(const SampleSet& samples) const;

 private:
  Vector offset_;
  Matrix basis_;  ///< E x m
};

/// Orthonormal trigonometric dictionary on (0,1)^d with frequencies up to l:
/// 1D modes {1, sqrt2 sin(2 pi k x), sqrt2 cos(2 pi k x)}_{k=1..l}, 2D tensor
/// products, N = (2l + 1)^d. Mode 0 is the constant.
class FourierDict {
 public:
  FourierDict(int dim, int l);
  /// l = 1/(2h), rounded down for odd cell counts.
  static FourierDict for_mesh(const Mesh& mesh);

  int dim() const { return dim_; }
  int l() const { return l_; }
  Index size() const { return dim_ == 1 ? modes1d() : modes1d() * modes1d(); }
  double eval(Index q, const Point& x) const;
  /// Values of all 1D modes at t, length 2l + 1.
  void eval_1d(double t, double* out) const;

 private:
  Index modes1d() const { return 2 * l_ + 1; }
  int dim_;
  int l_;
};

/// Deterministic forcing f(x) with a JSON descriptor for provenance.
class Forcing {
 public:
  Forcing(std::function<double(const Point&)> fn, nlohmann::json descriptor)
      : fn_(std::move(fn)), descriptor_(std::move(descriptor)) {}
  double operator()(const Point& x) const { return fn_(x); }
  const nlohmann::json& descriptor() const { return descriptor_; }
  bool is_zero() const { return descriptor_.value("kind", "") == "zero"; }

 private:
  std::function<double(const Point&)> fn_;
  nlohmann::json descriptor_;
};

/// f = sum_q v_q Phi_q.
Forcing forcing_from_vector(const FourierDict& dict, const Vector& v);

/// Descriptor forms:
///   {"kind":"preset","name":"cubic_1d"}   1 - x + x^2 - x^3
///   {"kind":"preset","name":"affine_2d"}  1 + x - 2y
///   {"kind":"constant","value":c}, {"kind":"zero"}
///   {"kind":"polynomial","terms":[[c, px, py], ...]}
///   {"kind":"fourier","l":l,"dim":d,"coefficients":[...]}
Forcing forcing_from_json(const nlohmann::json& j);

/// int_D phi_i f dx for every interior node (Gauss rule of `order` points per direction).
Vector load_vector(const Mesh& mesh, const Forcing& f, int order = 6);

/// int_D phi_i Phi_q dx, interior nodes x dictionary modes.
Matrix dictionary_load_matrix(const Mesh& mesh, const FourierDict& dict, int order = 6);

}  // namespace hsfem
