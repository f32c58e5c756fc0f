#pragma once

#include "hsfem/common.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace hsfem {

/// Per-coordinate distribution of the stochastic input.
enum class Measure {
  Uniform,   ///< U(-1/2, 1/2)
  Gaussian,  ///< N(0, 1)
};

enum class SampleKind { MonteCarlo, Smolyak };

std::string to_string(Measure m);
Measure measure_from_string(const std::string& s);

/// Discrete probability space: points theta^p (rows of `points`) with weights w^p.
/// Every expectation downstream is a weighted sum over this set.
struct SampleSet {
  int dimension = 0;  ///< m
  Matrix points;      ///< M x m
  Vector weights;     ///< length M, sums to 1
  Measure measure = Measure::Uniform;
  SampleKind kind = SampleKind::MonteCarlo;
  std::uint64_t seed = 0;  ///< MC only
  int order = 0;           ///< Smolyak only

  Index size() const { return points.rows(); }
  bool has_nonnegative_weights() const { return (weights.array() >= 0.0).all(); }

  /// SHA-256 over (m, M, kind, measure, points, weights); used to pin artifacts
  /// to the exact set they were built on.
  std::string hash() const;
};

using SampleSetPtr = std::shared_ptr<const SampleSet>;

/// i.i.d. draws from `measure`, weights 1/M. Same seed gives bit-identical points.
SampleSetPtr mc_sample(int m, Index samples, Measure measure, std::uint64_t seed);

/// Smolyak sparse grid of the given order built from Gauss rules
/// (Gauss-Legendre for uniform, Gauss-Hermite for Gaussian).
///
/// Level l in one coordinate uses the (2l - 1)-point rule; the grid combines
/// all tensor rules with sum_k (l_k - 1) <= order - 1, so order 1 is the
/// single point at the mean. Coinciding points are merged with summed weights.
SampleSetPtr smolyak(int m, int order, Measure measure, Index max_points = 2'000'000);

/// Number of points smolyak() would produce, without building the grid weights.
Index smolyak_point_count(int m, int order);

/// A function of omega restricted to a sample set.
class RandomFunction {
 public:
  RandomFunction(SampleSetPtr samples, Vector values);
  const Vector& values() const { return values_; }
  const SampleSetPtr& samples() const { return samples_; }

 private:
  SampleSetPtr samples_;
  Vector values_;
};

/// sum_p w^p f(theta^p)
double expect(const RandomFunction& f);
/// sum_p w^p f g
double inner(const RandomFunction& f, const RandomFunction& g);
/// sqrt(inner(f, f)), negative round-off clamped to 0
double l2norm(const RandomFunction& f);

/// Raw-vector forms used by the hot loops; weights are the sample weights.
double weighted_dot(const Vector& weights, const Eigen::Ref<const Vector>& f, const Eigen::Ref<const Vector>& g);
double weighted_norm(const Vector& weights, const Eigen::Ref<const Vector>& f);

void save_sample_set(const SampleSet& set, const std::string& path);
SampleSetPtr load_sample_set(const std::string& path);

}  // namespace hsfem
