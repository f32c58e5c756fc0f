#include "hsfem/correct.hpp"

#include "hsfem/random.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>

namespace hsfem {

double Functional::evaluate(const Mesh& mesh, const Eigen::Ref<const Vector>& interior_values) const {
  std::array<double, 3> bary{};
  const Index e = mesh.locate(point, bary);
  const auto& el = mesh.element(e);
  double u = 0.0;
  for (std::size_t a = 0; a < el.size(); ++a) {
    const Index k = mesh.interior_index(el[a]);
    if (k >= 0) u += bary[a] * interior_values[k];
  }
  return std::pow(u, power);
}

nlohmann::json Functional::to_json() const {
  return {{"kind", "point_moment"}, {"point", {point[0], point[1]}}, {"power", power}};
}

Functional Functional::from_json(const nlohmann::json& j) {
  Functional g;
  if (j.value("kind", "point_moment") != "point_moment") {
    throw ConfigError("unknown functional kind '" + j.value("kind", "") + "' (expected point_moment)");
  }
  try {
    if (j.contains("point")) {
      const auto& p = j.at("point");
      if (p.is_number()) {
        g.point = {p.get<double>(), 0.0};
      } else {
        const auto v = p.get<std::vector<double>>();
        if (v.empty() || v.size() > 2) throw ConfigError("functional point must have 1 or 2 coordinates");
        g.point = {v[0], v.size() > 1 ? v[1] : 0.0};
      }
    }
    g.power = j.value("power", 2);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("functional: ") + e.what());
  }
  if (g.power < 1) throw ConfigError("functional power must be >= 1");
  return g;
}

std::string to_string(Decision d) {
  switch (d) {
    case Decision::AcceptUh: return "accept_uh";
    case Decision::AcceptCorrected: return "accept_corrected";
    case Decision::Escalated: return "escalated";
  }
  return "?";
}

nlohmann::json CorrectionReport::to_json() const {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : rounds) {
    hist.push_back({{"n_mc", r.n_mc},
                    {"tau_bar", r.tau_bar},
                    {"tau_tilde", r.tau_tilde},
                    {"plain_mean", r.plain_mean},
                    {"plain_halfwidth", r.plain_halfwidth},
                    {"outcome", r.outcome}});
  }
  return {{"functional", functional.to_json()},
          {"expected_uh", expected_uh},
          {"n_mc", n_mc},
          {"tau_bar", tau_bar},
          {"tau_tilde", tau_tilde},
          {"corrected", corrected},
          {"ci", {ci_low, ci_high}},
          {"plain_mc", {{"mean", plain_mean}, {"ci", {plain_low, plain_high}}}},
          {"decision", to_string(decision)},
          {"absolute_fallback", absolute_fallback},
          {"rounds", hist}};
}

namespace {

struct Draws {
  std::vector<Index> index;
  Vector scale;  ///< sign(w_p) * sum|w| so that the mean is unbiased for sum_p w_p f_p
};

Draws draw_indices(const Vector& w, Index n, RandomSource& rng) {
  Draws d;
  d.index.resize(n);
  d.scale.resize(n);
  const double total = w.cwiseAbs().sum();
  const bool uniform = (w.array() == w[0]).all();
  for (Index k = 0; k < n; ++k) {
    const Index p = uniform ? static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(w.size())))
                            : static_cast<Index>(rng.weighted_index(w));
    d.index[k] = p;
    d.scale[k] = (w[p] < 0.0 ? -1.0 : 1.0) * total;
  }
  return d;
}

// g(u) at the given sample indices from fresh deterministic solves.
Vector fresh_values(const HsfemSolution& sol, const Functional& g, const std::vector<Index>& idx) {
  const CoupledSystem& sys = *sol.system;
  const SampleSet& s = *sys.samples();
  Matrix thetas(static_cast<Index>(idx.size()), s.dimension);
  for (std::size_t k = 0; k < idx.size(); ++k) thetas.row(static_cast<Index>(k)) = s.points.row(idx[k]);
  Vector out(static_cast<Index>(idx.size()));
  solve_samples(sys.mesh(), sys.model(), thetas, sol.load,
                [&](Index k, const Matrix& U) { out[k] = g.evaluate(sys.mesh(), U.col(0)); });
  return out;
}

Vector uh_values(const HsfemSolution& sol, const Functional& g) {
  const Matrix U = sol.materialize();
  Vector out(U.cols());
  for (Index p = 0; p < U.cols(); ++p) out[p] = g.evaluate(sol.system->mesh(), U.col(p));
  return out;
}

}  // namespace

CorrectionReport estimate_and_correct(const HsfemSolution& sol, const Functional& g, const CorrectionOptions& opt) {
  if (opt.n_mc < 2) throw ConfigError("correction needs at least 2 Monte Carlo samples");
  if (opt.max_rounds < 1) throw ConfigError("correction needs max_rounds >= 1");
  if (!(opt.threshold > 0.0)) throw ConfigError("correction threshold must be positive");
  const SampleSet& s = *sol.system->samples();
  const Vector guh = uh_values(sol, g);

  CorrectionReport rep;
  rep.functional = g;
  rep.expected_uh = s.weights.dot(guh);
  rep.absolute_fallback = std::abs(rep.expected_uh) < 1e-14;
  if (rep.absolute_fallback) spdlog::warn("E[g(u_h)] is ~0; correction thresholds are applied in absolute terms");

  Index n = opt.n_mc;
  for (int round = 0; round < opt.max_rounds; ++round, n *= 2) {
    RandomSource rng(opt.seed, Stream::Correction, static_cast<std::uint32_t>(round));
    const Draws d = draw_indices(s.weights, n, rng);
    const Vector gu = fresh_values(sol, g, d.index);
    Vector tau(n), plain(n);
    for (Index k = 0; k < n; ++k) {
      tau[k] = d.scale[k] * (gu[k] - guh[d.index[k]]);
      plain[k] = d.scale[k] * gu[k];
    }
    const double nn = static_cast<double>(n);
    const double tau_bar = tau.mean();
    const double tau_tilde = std::sqrt((tau.array() - tau_bar).square().sum() / (nn * (nn - 1.0)));
    const double plain_mean = plain.mean();
    const double plain_sd = std::sqrt((plain.array() - plain_mean).square().sum() / (nn - 1.0));

    CorrectionRound r{n, tau_bar, tau_tilde, plain_mean, 2.0 * plain_sd / std::sqrt(nn), "double"};
    const double scale1 = rep.absolute_fallback ? 1.0 : std::abs(rep.expected_uh);
    const double scale2 = rep.absolute_fallback ? 1.0 : std::abs(rep.expected_uh + tau_bar);
    rep.n_mc = n;
    rep.tau_bar = tau_bar;
    rep.tau_tilde = tau_tilde;
    rep.corrected = rep.expected_uh + tau_bar;
    rep.ci_low = rep.corrected - 2.0 * tau_tilde;
    rep.ci_high = rep.corrected + 2.0 * tau_tilde;
    rep.plain_mean = plain_mean;
    rep.plain_low = plain_mean - r.plain_halfwidth;
    rep.plain_high = plain_mean + r.plain_halfwidth;
    if ((std::abs(tau_bar) + 2.0 * std::abs(tau_tilde)) / scale1 <= opt.threshold) {
      r.outcome = "accept_uh";
      rep.decision = Decision::AcceptUh;
    } else if (tau_tilde < opt.threshold * scale2) {
      r.outcome = "accept_corrected";
      rep.decision = Decision::AcceptCorrected;
    }
    rep.rounds.push_back(r);
    spdlog::info("correction round {}: N={} tau_bar={:.4e} tau_tilde={:.4e} -> {}", round + 1, n, tau_bar, tau_tilde,
                 r.outcome);
    if (r.outcome != "double") return rep;
  }
  rep.decision = Decision::Escalated;
  return rep;
}

VarianceEstimate variance_ratio(const HsfemSolution& sol, const Functional& g, Index n_probe, std::uint64_t seed) {
  if (n_probe < 2) throw ConfigError("variance estimate needs at least 2 samples");
  const SampleSet& s = *sol.system->samples();
  const Vector guh = uh_values(sol, g);
  VarianceEstimate est;
  Vector gu, tau, wts;
  if (n_probe >= s.size()) {
    std::vector<Index> all(static_cast<std::size_t>(s.size()));
    for (Index p = 0; p < s.size(); ++p) all[static_cast<std::size_t>(p)] = p;
    gu = fresh_values(sol, g, all);
    tau = gu - guh;
    wts = s.weights;
    const auto wsd = [&](const Vector& v) {
      const double m = wts.dot(v);
      return std::sqrt(std::max(0.0, wts.dot((v.array() - m).square().matrix())));
    };
    est.sigma_g = wsd(gu);
    est.sigma_tau = wsd(tau);
    est.samples = s.size();
  } else {
    RandomSource rng(seed, Stream::VarianceProbe);
    const Draws d = draw_indices(s.weights, n_probe, rng);
    gu = fresh_values(sol, g, d.index);
    tau.resize(n_probe);
    for (Index k = 0; k < n_probe; ++k) tau[k] = gu[k] - guh[d.index[k]];
    const auto sd = [](const Vector& v) {
      const double m = v.mean();
      return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
    };
    est.sigma_g = sd(gu);
    est.sigma_tau = sd(tau);
    est.samples = n_probe;
  }
  est.ratio = est.sigma_tau > 0.0 ? est.sigma_g / est.sigma_tau : std::numeric_limits<double>::infinity();
  return est;
}

}  // namespace hsfem
