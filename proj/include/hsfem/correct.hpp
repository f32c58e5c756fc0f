#pragma once

#include "hsfem/common.hpp"
#include "hsfem/online.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace hsfem {

/// Scalar quantity of interest g evaluated on one realization. Only the point
/// moment g(u) = u(x0)^power is provided.
struct Functional {
  Point point{0.5, 0.5};
  int power = 2;

  double evaluate(const Mesh& mesh, const Eigen::Ref<const Vector>& interior_values) const;
  nlohmann::json to_json() const;
  static Functional from_json(const nlohmann::json& j);
};

struct CorrectionOptions {
  double threshold = 1e-2;  ///< relative tolerance epsilon of the decision rule
  Index n_mc = 100;         ///< first-round sample count
  std::uint64_t seed = 1;
  int max_rounds = 5;
};

enum class Decision { AcceptUh, AcceptCorrected, Escalated };
std::string to_string(Decision d);

struct CorrectionRound {
  Index n_mc = 0;
  double tau_bar = 0.0;
  double tau_tilde = 0.0;
  double plain_mean = 0.0;       ///< plain MC mean of g(u) at the same draws
  double plain_halfwidth = 0.0;  ///< 2 * sample sd / sqrt(N)
  std::string outcome;           ///< accept_uh, accept_corrected or double
};

struct CorrectionReport {
  Functional functional;
  double expected_uh = 0.0;  ///< E[g(u_h)] over the full sample set
  Index n_mc = 0;
  double tau_bar = 0.0, tau_tilde = 0.0;
  double corrected = 0.0;    ///< E[g(u_h)] + tau_bar
  double ci_low = 0.0, ci_high = 0.0;
  double plain_mean = 0.0, plain_low = 0.0, plain_high = 0.0;
  Decision decision = Decision::Escalated;
  bool absolute_fallback = false;  ///< |E[g(u_h)]| < 1e-14, thresholds applied in absolute terms
  std::vector<CorrectionRound> rounds;

  nlohmann::json to_json() const;
};

/// Control-variate estimate of E[g(u)] = E[g(u_h)] + E[g(u) - g(u_h)]. Each
/// round draws N sample indices with replacement (probability proportional to
/// |w|), solves the deterministic problem there and applies the three-case
/// rule; N doubles with fresh draws until a case fires or max_rounds is reached.
CorrectionReport estimate_and_correct(const HsfemSolution& sol, const Functional& g, const CorrectionOptions& opt);

struct VarianceEstimate {
  double sigma_g = 0.0;    ///< sigma[g(u)]
  double sigma_tau = 0.0;  ///< sigma[g(u) - g(u_h)]
  double ratio = 0.0;      ///< sigma_g / sigma_tau, +inf when sigma_tau = 0
  Index samples = 0;
};

/// Sample estimate of the variance reduction. With n_probe >= M every sample
/// is used with its weight, which gives the exact discrete value.
VarianceEstimate variance_ratio(const HsfemSolution& sol, const Functional& g, Index n_probe, std::uint64_t seed);

}  // namespace hsfem
