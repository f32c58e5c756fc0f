// Acceptance gate: one PASS/FAIL line per criterion.
//
//   hsfem_acceptance --criterion 4     run one criterion
//   hsfem_acceptance                   run all of them

#include "hsfem/correct.hpp"
#include "hsfem/experiment.hpp"
#include "hsfem/hsfem.h"
#include "hsfem/klbaseline.hpp"
#include "hsfem/offline.hpp"
#include "hsfem/online.hpp"
#include "hsfem/rangefinder.hpp"

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <string>
#include <vector>

using namespace hsfem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& what) { notes.push_back("     " + what); }
};

double probe_scale() { return 10.0 * std::sqrt(2.0 / std::numbers::pi); }

struct Built {
  MeshPtr mesh;
  SampleSetPtr samples;
  std::shared_ptr<const LocalBasis> basis;
  CoupledSystemPtr system;
};

Built build(const ExperimentConfig& cfg) {
  Built b;
  b.mesh = make_mesh(cfg);
  b.samples = make_samples(cfg);
  b.basis = std::make_shared<LocalBasis>(build_local_basis(*b.mesh, cfg.coefficient, b.samples, cfg.offline));
  b.system = assemble_coupled(b.mesh, cfg.coefficient, b.basis);
  return b;
}

Forcing first_forcing(const ExperimentConfig& cfg) { return forcing_from_json(cfg.forcings.at(0)); }

// ---------------------------------------------------------------- criterion 1

Matrix random_orthonormal(Index rows, Index cols, std::uint64_t seed) {
  RandomSource rng(seed, Stream::Test);
  Eigen::HouseholderQR<Matrix> qr(rng.gaussian_matrix(rows, cols));
  return qr.householderQ() * Matrix::Identity(rows, cols);
}

double spectral_residual(const Matrix& A, const Matrix& Q) {
  const Matrix R = A - Q * (Q.transpose() * A);
  return Eigen::BDCSVD<Matrix>(R).singularValues()[0];
}

Outcome criterion1() {
  Outcome out;
  const int r = 5;
  struct Family {
    std::string name;
    double eps;
    std::function<double(Index)> sigma;  // j = 1, 2, ...
  };
  const std::vector<Family> families = {
      {"exponential 0.3^j", 1e-6, [](Index j) { return std::pow(0.3, double(j)); }},
      {"exponential 0.1^j", 1e-6, [](Index j) { return std::pow(0.1, double(j)); }},
      {"algebraic j^-8", 1e-6, [](Index j) { return std::pow(double(j), -8.0); }},
      {"algebraic j^-5", 1e-3, [](Index j) { return std::pow(double(j), -5.0); }},
      {"exact rank 12", 1e-6, [](Index j) { return j <= 12 ? std::pow(0.8, double(j)) : 0.0; }},
  };
  int residual_ok[2] = {0, 0}, size_ok[2] = {0, 0};
  Index worst_excess[2] = {-100, -100};
  for (int t = 0; t < 100; ++t) {
    const Family& fam = families[t % families.size()];
    const Index rows = 180 + 30 * (t % 5), cols = 100 + 25 * ((t / 5) % 5);
    const Index n = std::min(rows, cols);
    Vector s(n);
    for (Index j = 0; j < n; ++j) s[j] = fam.sigma(j + 1);
    const Matrix A = random_orthonormal(rows, n, 7000 + t) * s.asDiagonal() *
                     random_orthonormal(cols, n, 9000 + t).transpose();
    Index opt = 0;
    while (opt < n && s[opt] > fam.eps) ++opt;
    const MatVecOperator op = MatVecOperator::from_matrix(A);
    const RangeBasis found[2] = {adaptive_range_finder(op, fam.eps, r, 100 + t),
                                 svd_range_finder(op, fam.eps, r, 20, 100 + t, true)};
    for (int a = 0; a < 2; ++a) {
      residual_ok[a] += spectral_residual(A, found[a].Q) <= fam.eps;
      size_ok[a] += found[a].size() <= opt + r + 2;
      worst_excess[a] = std::max(worst_excess[a], found[a].size() - opt);
    }
  }
  const char* names[2] = {"adaptive finder", "sketch SVD finder"};
  for (int a = 0; a < 2; ++a) {
    out.require(residual_ok[a] >= 99, fmt::format("{}: ||(I-QQ^T)A|| <= eps in {}/100 trials", names[a], residual_ok[a]));
    out.require(size_ok[a] >= 99, fmt::format("{}: size <= optimal + r + 2 in {}/100 trials (worst size - optimal = {})",
                                              names[a], size_ok[a], worst_excess[a]));
  }
  return out;
}

// ---------------------------------------------------------------- criterion 2

Vector interior_of(const Mesh& mesh, const Vector& full) {
  Vector v(mesh.interior_count());
  for (Index i = 0; i < v.size(); ++i) v[i] = full[mesh.interior_node(i)];
  return v;
}

Outcome criterion2() {
  Outcome out;
  for (const std::string name : {"const-1d", "const-2d"}) {
    for (double value : {1.0, 2.5}) {
      ExperimentConfig cfg = preset(name, true);
      cfg.coefficient = CoefficientModel::from_json({{"kind", "constant"}, {"value", value}});
      const Built b = build(cfg);
      bool all_zero = true;
      for (int k : b.basis->k) all_zero &= k == 0;
      out.require(all_zero && b.system->size() == b.mesh->interior_count(),
                  fmt::format("{} a={}: k_i = 0 at all {} nodes, S = n_interior", name, value, b.basis->node_count()));
      const std::vector<nlohmann::json> forcings = {
          {{"kind", "constant"}, {"value", 1.0}},
          cfg.dim == 1 ? nlohmann::json{{"kind", "preset"}, {"name", "cubic_1d"}}
                       : nlohmann::json{{"kind", "preset"}, {"name", "affine_2d"}},
          {{"kind", "polynomial"}, {"terms", {{3.0, 2, 0}, {-1.0, 0, 1}}}}};
      for (const auto& fj : forcings) {
        const Forcing f = forcing_from_json(fj);
        const Vector det = interior_of(*b.mesh, solve_deterministic(*b.mesh, cfg.coefficient, Vector(), f));
        const HsfemSolution sol = solve_online(b.system, f);
        const Matrix U = sol.materialize();
        double err = (sol.mean() - det).cwiseAbs().maxCoeff();
        for (Index p = 0; p < U.cols(); ++p) err = std::max(err, (U.col(p) - det).cwiseAbs().maxCoeff());
        const double rel = err / det.cwiseAbs().maxCoeff();
        out.require(rel <= 1e-10 && sol.sd().cwiseAbs().maxCoeff() == 0.0,
                    fmt::format("{} a={} f={}: |u_h - u_det| / |u_det| = {:.1e}, sd = 0", name, value, fj.dump(), rel));
      }
    }
  }

  // a = 1, f = 1 in 1D through the C interface: x(1-x)/2 at the nodes.
  hsfem_config* cfg = nullptr;
  hsfem_artifact* art = nullptr;
  hsfem_solution* sol = nullptr;
  bool ok = hsfem_config_from_preset("const-1d", 1, &cfg) == HSFEM_OK && hsfem_artifact_build(cfg, &art) == HSFEM_OK &&
            hsfem_online_solve(art, R"({"kind":"constant","value":1})", &sol) == HSFEM_OK;
  double worst = std::numeric_limits<double>::infinity();
  if (ok) {
    const size_t n = hsfem_solution_size(sol);
    std::vector<double> mean(n), sd(n);
    ok = hsfem_solution_statistics(sol, mean.data(), sd.data()) == HSFEM_OK;
    worst = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double x = double(i + 1) / double(n + 1);
      worst = std::max({worst, std::abs(mean[i] - x * (1 - x) / 2), std::abs(sd[i])});
    }
  } else {
    out.note(std::string("C API error: ") + hsfem_last_error());
  }
  hsfem_solution_free(sol);
  hsfem_artifact_free(art);
  hsfem_config_free(cfg);
  out.require(ok && worst <= 1e-14, fmt::format("1D a=1 f=1 via C API: max |u_h - x(1-x)/2| = {:.1e}", worst));
  return out;
}

// ---------------------------------------------------------------- criterion 3

// int_0^1 phi_i(x) x^k dx for the hat at x_i = (i+1) h, exactly.
double hat_moment(Index i, double h, int k) {
  const double a = i * h, b = (i + 1) * h, c = (i + 2) * h;
  auto I = [](double lo, double hi, int q) { return (std::pow(hi, q + 1) - std::pow(lo, q + 1)) / (q + 1); };
  return (I(a, b, k + 1) - a * I(a, b, k)) / h + (c * I(b, c, k) - I(b, c, k + 1)) / h;
}

Outcome criterion3() {
  Outcome out;
  for (std::uint64_t seed : {3u, 11u}) {
    ExperimentConfig cfg;
    cfg.dim = 1;
    cfg.cells = 8;
    cfg.coefficient = CoefficientModel::from_json({{"kind", "trig_lognormal_1d"}, {"m", 2}});
    cfg.samples = 16;
    cfg.sample_seed = seed;
    cfg.offline.K = 8;
    cfg.offline.r = 4;
    cfg.offline.epsilon = 1e-8;
    cfg.offline.seed = seed;
    const Built b = build(cfg);
    const Index n = b.mesh->interior_count(), M = b.samples->size(), S = b.system->size();
    const double h = 1.0 / cfg.cells;
    const Vector& w = b.samples->weights;
    const auto off = b.basis->offsets();

    Matrix a(cfg.cells, M);
    for (Index p = 0; p < M; ++p) {
      for (int e = 0; e < cfg.cells; ++e) a(e, p) = cfg.coefficient.eval({(e + 0.5) * h, 0.0}, b.samples->points.row(p).transpose());
    }
    auto stiff = [&](Index i1, Index i2, Index p) {
      if (i1 == i2) return (a(i1, p) + a(i1 + 1, p)) / h;
      if (std::abs(i1 - i2) == 1) return -a(std::max(i1, i2), p) / h;
      return 0.0;
    };
    // f = 1 - x + x^2 - x^3
    Vector ell(n);
    for (Index i = 0; i < n; ++i) {
      ell[i] = hat_moment(i, h, 0) - hat_moment(i, h, 1) + hat_moment(i, h, 2) - hat_moment(i, h, 3);
    }
    Matrix G = Matrix::Zero(S, S);
    Vector rhs = Vector::Zero(S);
    for (Index i1 = 0; i1 < n; ++i1) {
      const Matrix X1 = b.basis->extended(i1);
      rhs.segment(off[i1], X1.cols()) = X1.transpose() * w * ell[i1];
      for (Index i2 = std::max<Index>(0, i1 - 1); i2 <= std::min(n - 1, i1 + 1); ++i2) {
        const Matrix X2 = b.basis->extended(i2);
        Vector ws(M);
        for (Index p = 0; p < M; ++p) ws[p] = w[p] * stiff(i1, i2, p);
        G.block(off[i1], off[i2], X1.cols(), X2.cols()) = X1.transpose() * ws.asDiagonal() * X2;
      }
    }
    const Vector c_ref = G.fullPivLu().solve(rhs);
    const HsfemSolution sol = solve_online(b.system, forcing_from_json({{"kind", "preset"}, {"name", "cubic_1d"}}));
    const double rel = (sol.c - c_ref).norm() / c_ref.norm();
    out.require(rel <= 1e-8 && b.basis->average_k() > 0.0,
                fmt::format("seed {}: n = {}, M = {}, S = {}, k = {:.2f}: |c - c_dense| / |c_dense| = {:.1e}", seed, n,
                            M, S, b.basis->average_k(), rel));
  }
  return out;
}

// ---------------------------------------------------------------- criterion 4

Outcome criterion4() {
  Outcome out;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ExperimentConfig cfg = preset("paper-1d-m20", true);
    cfg.sample_seed = seed;
    cfg.offline.seed = seed;
    const Built b = build(cfg);
    const Forcing f = first_forcing(cfg);
    const HsfemSolution sol = solve_online(b.system, f);
    const Ensemble ref = solve_ensemble(b.mesh, cfg.coefficient, b.samples, f);
    const Metric e = e_hsfem(sol, ref);
    const KlMatch kl = e_kl_match(ref, b.basis->average_k());
    double mid = 0, outer = 0;
    int n_mid = 0, n_outer = 0;
    for (Index i = 0; i < b.mesh->interior_count(); ++i) {
      const double x = b.mesh->node(b.mesh->interior_node(i))[0];
      if (x > 1.0 / 3 && x < 2.0 / 3) mid += b.basis->k[i], ++n_mid;
      if (x < 1.0 / 6 || x > 5.0 / 6) outer += b.basis->k[i], ++n_outer;
    }
    mid /= n_mid;
    outer /= n_outer;
    const double k = b.basis->average_k();
    out.require(k >= 18 && k <= 38, fmt::format("seed {}: average k = {:.2f} in [18, 38]", seed, k));
    out.require(e.defined && e.value <= 5e-2, fmt::format("seed {}: E_HSFEM = {:.3e} <= 5e-2", seed, e.value));
    out.require(e.defined && kl.floor.defined && e.value <= 3 * kl.floor.value && kl.floor.value <= 3 * e.value,
                fmt::format("seed {}: E_HSFEM / E_KL = {:.3e} / {:.3e} (k_match = {}) within a factor 3", seed, e.value,
                            kl.floor.value, kl.k_floor));
    out.require(mid > outer, fmt::format("seed {}: mean k_i middle third {:.1f} > outer sixths {:.1f}", seed, mid, outer));
  }
  return out;
}

// ---------------------------------------------------------------- criterion 5

Outcome criterion5() {
  Outcome out;
  const ExperimentConfig base_cfg = preset("tmatrix-1d-m20", true);
  const Mesh mesh = Mesh::uniform(1, base_cfg.cells);
  const FourierDict dict = FourierDict::for_mesh(mesh);
  const Index node = base_cfg.cells / 2 - 1;  // x = 1/2
  out.note(fmt::format("h = 1/{}, node x = {}, M = {}", base_cfg.cells, mesh.node(mesh.interior_node(node))[0],
                       base_cfg.samples));

  const TMatrix t = tmatrix_explicit(mesh, base_cfg.coefficient, make_samples(base_cfg), dict, node);
  const LogLinearFit fit = fit_log_linear(t.singular_values);
  out.require(fit.slope < 0.0 && fit.r2 >= 0.9,
              fmt::format("m = 10: log sigma_k fit over {} values: slope = {:.3f}, R^2 = {:.4f}", fit.count, fit.slope,
                          fit.r2));

  std::vector<Index> k_plain, k_norm;
  for (int m : {10, 15, 20}) {
    for (const char* kind : {"trig_lognormal_1d", "normalized_1d"}) {
      ExperimentConfig cfg = base_cfg;
      cfg.coefficient = CoefficientModel::from_json({{"kind", kind}, {"m", m}});
      const Index k = tmatrix_explicit(mesh, cfg.coefficient, make_samples(cfg), dict, node).rank_at(2e-3);
      (std::string(kind) == "normalized_1d" ? k_norm : k_plain).push_back(k);
    }
  }
  const auto [lo, hi] = std::minmax_element(k_norm.begin(), k_norm.end());
  const double spread = *hi > 0 ? double(*hi - *lo) / double(*hi) : 0.0;
  out.require(spread <= 0.3, fmt::format("normalized k(2e-3) for m = 10/15/20: {}/{}/{}, spread {:.1f}% <= 30%",
                                         k_norm[0], k_norm[1], k_norm[2], 100 * spread));
  out.require(k_plain[0] <= k_plain[1] && k_plain[1] <= k_plain[2] && k_plain[0] < k_plain[2],
              fmt::format("unnormalized k(2e-3) for m = 10/15/20: {}/{}/{}, increasing", k_plain[0], k_plain[1],
                          k_plain[2]));
  return out;
}

// ---------------------------------------------------------------- criterion 6

Outcome criterion6() {
  Outcome out;
  const std::vector<double> thresholds = {3e-3, 1e-3, 3e-4};
  std::vector<double> xs, ys;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ExperimentConfig cfg = preset("paper-1d-m20", true);
    cfg.cells = 64;
    cfg.samples = 2000;
    cfg.sample_seed = seed;
    cfg.offline.K = 80;
    cfg.offline.seed = seed;
    const MeshPtr mesh = make_mesh(cfg);
    const SampleSetPtr samples = make_samples(cfg);
    const Forcing f = first_forcing(cfg);
    const Ensemble ref = solve_ensemble(mesh, cfg.coefficient, samples, f);
    std::string row;
    for (double thr : thresholds) {
      cfg.offline.epsilon = thr * probe_scale();
      auto basis = std::make_shared<LocalBasis>(build_local_basis(*mesh, cfg.coefficient, samples, cfg.offline));
      const Metric e = e_hsfem(solve_online(assemble_coupled(mesh, cfg.coefficient, basis), f), ref);
      if (!e.defined || !(e.value > 0.0)) {
        out.require(false, fmt::format("seed {} threshold {:.0e}: E_HSFEM undefined", seed, thr));
        return out;
      }
      xs.push_back(std::log(thr));
      ys.push_back(std::log(e.value));
      row += fmt::format("  {:.0e}: E = {:.3e} (k = {:.1f}, saturated {})", thr, e.value, basis->average_k(),
                         basis->saturated_count());
    }
    out.note(fmt::format("seed {}:{}", seed, row));
  }
  const Eigen::Map<const Vector> x(xs.data(), xs.size()), y(ys.data(), ys.size());
  const double xm = x.mean(), ym = y.mean();
  const double alpha = ((x.array() - xm) * (y.array() - ym)).sum() / (x.array() - xm).square().sum();
  out.require(alpha >= 0.6 && alpha <= 1.5,
              fmt::format("log E_HSFEM = log C + alpha log eps over 15 runs: alpha = {:.3f} in [0.6, 1.5]", alpha));
  return out;
}

// ---------------------------------------------------------------- criterion 7

Outcome criterion7() {
  Outcome out;
  const ExperimentConfig cfg = preset("paper-1d-m30-correction", true);
  const Built b = build(cfg);
  out.note(fmt::format("h = 1/{}, m = {}, M = {}, K = {}, tolerance {:.1e}, k = {:.2f}", cfg.cells, cfg.coefficient.m,
                       b.samples->size(), cfg.offline.K, cfg.offline.epsilon / probe_scale(), b.basis->average_k()));
  const HsfemSolution sol = solve_online(b.system, first_forcing(cfg));
  const VarianceEstimate v = variance_ratio(sol, cfg.functional, cfg.variance_probe, cfg.correction.seed);
  out.require(v.ratio >= 3.0, fmt::format("sigma_g / sigma_tau = {:.4e} / {:.4e} = {:.2f} >= 3 ({} samples)", v.sigma_g,
                                          v.sigma_tau, v.ratio, v.samples));
  const CorrectionReport rep = estimate_and_correct(sol, cfg.functional, cfg.correction);
  const CorrectionRound& r0 = rep.rounds.front();
  const double hw = 2.0 * r0.tau_tilde, narrowing = r0.plain_halfwidth / hw;
  out.note(fmt::format("E[g(u_h)] = {:.5e}; corrected CI [{:.5e}, {:.5e}]; plain MC CI [{:.5e}, {:.5e}]; decision {}",
                       rep.expected_uh, rep.expected_uh + r0.tau_bar - hw, rep.expected_uh + r0.tau_bar + hw,
                       r0.plain_mean - r0.plain_halfwidth, r0.plain_mean + r0.plain_halfwidth, to_string(rep.decision)));
  out.require(r0.n_mc == 100 && narrowing >= 4.0,
              fmt::format("N_MC = {}: corrected CI is {:.1f}x narrower than plain MC (>= 4)", r0.n_mc, narrowing));
  out.require(b.basis->saturated_count() > 0,
              fmt::format("saturated nodes: {} of {}", b.basis->saturated_count(), b.basis->node_count()));
  return out;
}

// ---------------------------------------------------------------- criterion 8

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void check_instance(Outcome& out, const std::string& label, const ExperimentConfig& cfg) {
  const Built b = build(cfg);
  const Vector& w = b.samples->weights;
  const Index n = b.mesh->interior_count(), M = b.samples->size();

  double ortho = 0.0, meanfree = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Matrix& X = b.basis->xi[i];
    if (X.cols() == 0) continue;
    ortho = std::max(ortho, (X.transpose() * w.asDiagonal() * X - Matrix::Identity(X.cols(), X.cols())).cwiseAbs().maxCoeff());
    meanfree = std::max(meanfree, (X.transpose() * w).cwiseAbs().maxCoeff());
  }
  out.require(ortho <= 1e-10 && meanfree <= 1e-10,
              fmt::format("{}: basis orthonormality {:.1e}, mean {:.1e} (k = {:.2f})", label, ortho, meanfree,
                          b.basis->average_k()));

  const Matrix sm = b.system->matrix();
  const bool symmetric = (sm - sm.transpose()).cwiseAbs().maxCoeff() == 0.0;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(sm, Eigen::EigenvaluesOnly);
  out.require(symmetric && eig.eigenvalues()[0] > 0.0,
              fmt::format("{}: SM symmetric, smallest eigenvalue {:.2e} > 0", label, eig.eigenvalues()[0]));

  const Forcing f = first_forcing(cfg);
  const HsfemSolution sol = solve_online(b.system, f);
  const Matrix Uh = sol.materialize();
  const Vector load = load_vector(*b.mesh, f);
  const StiffnessAssembler assembler(*b.mesh);
  const Matrix coef = CentroidCoefficients(*b.mesh, cfg.coefficient).evaluate_all(*b.samples);
  Matrix residual(n, M);
  for (Index p = 0; p < M; ++p) residual.col(p) = load - assembler.assemble(coef.col(p)) * Uh.col(p);
  double orth = 0.0, scale = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Matrix X = b.basis->extended(i);
    orth = std::max(orth, (X.transpose() * w.cwiseProduct(residual.row(i).transpose())).cwiseAbs().maxCoeff());
    scale = std::max(scale, (X.transpose() * w * load[i]).cwiseAbs().maxCoeff());
  }
  out.require(orth <= 1e-7 * scale, fmt::format("{}: Galerkin orthogonality {:.1e} relative", label, orth / scale));

  const auto [mean, sd] = statistics(sol);
  Vector m_oracle(n), sd_oracle(n);
  for (Index i = 0; i < n; ++i) {
    double s = 0.0, s2 = 0.0;
    for (Index p = 0; p < M; ++p) s += w[p] * Uh(i, p);
    for (Index p = 0; p < M; ++p) s2 += w[p] * (Uh(i, p) - s) * (Uh(i, p) - s);
    m_oracle[i] = s;
    sd_oracle[i] = std::sqrt(std::max(s2, 0.0));
  }
  const double stat_err = std::max((mean - m_oracle).cwiseAbs().maxCoeff() / m_oracle.cwiseAbs().maxCoeff(),
                                   (sd - sd_oracle).cwiseAbs().maxCoeff() / sd_oracle.cwiseAbs().maxCoeff());
  out.require(stat_err <= 1e-8, fmt::format("{}: statistics shortcut vs traces {:.1e}", label, stat_err));

  const Ensemble ref = solve_ensemble(b.mesh, cfg.coefficient, b.samples, f);
  const KlDecomposition kl = kl_expand(ref);
  bool positive = (w.array() > 0.0).all();
  if (positive) {
    // Eigenvalues of M^{1/2} C M^{1/2}, C the weighted covariance of the traces.
    const Matrix mass = Matrix(b.mesh->interior_mass_matrix());
    const Eigen::SelfAdjointEigenSolver<Matrix> me(mass);
    const Matrix msqrt = me.eigenvectors() * me.eigenvalues().cwiseSqrt().asDiagonal() * me.eigenvectors().transpose();
    const Matrix centered = ref.values.colwise() - ref.values * w;
    const Matrix cov = msqrt * centered * w.asDiagonal() * centered.transpose() * msqrt;
    const Vector lam = Eigen::SelfAdjointEigenSolver<Matrix>(cov).eigenvalues().reverse();
    double eig_err = 0.0;
    for (Index j = 0; j < kl.rank(); ++j) eig_err = std::max(eig_err, std::abs(lam[j] - kl.eigenvalues[j]) / lam[0]);
    out.require(eig_err <= 1e-8, fmt::format("{}: KL spectrum vs dense covariance {:.1e} over {} modes", label, eig_err,
                                             kl.rank()));
  }
  double ey = 0.0, prev = std::numeric_limits<double>::infinity();
  bool monotone = true;
  const Index kmax = std::min<Index>(kl.rank(), 12);
  for (Index k = 0; k <= kmax; ++k) {
    const Metric e = e_kl(kl, ref, k);
    ey = std::max(ey, std::abs(e.value - kl.tail_error(k)));
    monotone &= e.value <= prev + 1e-12;
    prev = e.value;
  }
  out.require(ey <= 1e-8 && monotone,
              fmt::format("{}: E_KL(k) = Eckart-Young tail to {:.1e}, nonincreasing for k = 0..{}", label, ey, kmax));

  const auto dir = std::filesystem::temp_directory_path();
  const auto p1 = dir / ("hsfem_accept_a_" + label + ".art"), p2 = dir / ("hsfem_accept_b_" + label + ".art");
  save_artifact({b.system, cfg.to_json()}, p1.string());
  save_artifact({build(cfg).system, cfg.to_json()}, p2.string());
  const bool same = slurp(p1) == slurp(p2);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
  out.require(same, fmt::format("{}: offline artifact replays byte-identically", label));
}

Outcome criterion8() {
  Outcome out;
  ExperimentConfig c1;
  c1.dim = 1;
  c1.cells = 16;
  c1.coefficient = CoefficientModel::from_json({{"kind", "trig_lognormal_1d"}, {"m", 4}});
  c1.samples = 80;
  c1.sample_seed = 5;
  c1.offline.K = 12;
  c1.offline.epsilon = 1e-3;
  c1.forcings = {{{"kind", "preset"}, {"name", "cubic_1d"}}};
  check_instance(out, "1d-mc", c1);

  ExperimentConfig c2 = c1;
  c2.sample_kind = SampleKind::Smolyak;
  c2.order = 3;
  check_instance(out, "1d-smolyak", c2);

  ExperimentConfig c3;
  c3.dim = 2;
  c3.cells = 6;
  c3.coefficient = CoefficientModel::from_json({{"kind", "trig_lognormal_2d"}, {"m", 3}});
  c3.measure = Measure::Gaussian;
  c3.samples = 60;
  c3.sample_seed = 2;
  c3.offline.K = 10;
  c3.offline.epsilon = 1e-3;
  c3.forcings = {{{"kind", "preset"}, {"name", "affine_2d"}}};
  check_instance(out, "2d-mc", c3);
  return out;
}

// ---------------------------------------------------------------- criterion 9

Outcome criterion9() {
  Outcome out;
  ExperimentConfig cfg = preset("paper-2d-m36", true);
  for (std::uint64_t seed : {1u, 2u}) {
    cfg.sample_seed = seed;
    cfg.offline.seed = seed;
    const Built b = build(cfg);
    const Forcing f = first_forcing(cfg);
    const Ensemble ref = solve_ensemble(b.mesh, cfg.coefficient, b.samples, f);
    const Metric e = e_hsfem(solve_online(b.system, f), ref);
    const KlMatch kl = e_kl_match(ref, b.basis->average_k());
    out.require(e.defined && kl.floor.defined && e.value < kl.floor.value && e.value <= 0.2,
                fmt::format("seed {}: h = 1/{}, m = {}, M = {}, k = {:.2f}: E_HSFEM = {:.3e} < E_KL = {:.3e}, <= 0.2",
                            seed, cfg.cells, cfg.coefficient.m, b.samples->size(), b.basis->average_k(), e.value,
                            kl.floor.value));
  }
  return out;
}

const std::vector<std::pair<std::string, std::function<Outcome()>>> kCriteria = {
    {"range-finder oracle equivalence", criterion1},
    {"deterministic reduction", criterion2},
    {"brute-force Galerkin equivalence", criterion3},
    {"1D m=20 desk-scale reproduction", criterion4},
    {"singular-value decay", criterion5},
    {"convergence in epsilon", criterion6},
    {"variance reduction", criterion7},
    {"invariant suite", criterion8},
    {"scaled 2D local vs global", criterion9},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HSFEM acceptance criteria"};
  std::vector<int> which;
  int threads = 0;
  app.add_option("-c,--criterion", which, "criterion number(s), default all")->check(CLI::Range(1, 9));
  app.add_option("-t,--threads", threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  CLI11_PARSE(app, argc, argv);
  if (which.empty()) {
    for (int i = 1; i <= 9; ++i) which.push_back(i);
  }
  set_thread_count(threads);
  spdlog::set_level(spdlog::level::warn);

  int failed = 0;
  for (int id : which) {
    const auto& [name, run] = kCriteria[id - 1];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& line : o.notes) fmt::print("  [{}] {}\n", id, line);
    fmt::print("{} criterion {}: {} ({:.1f}s)\n", o.pass ? "PASS" : "FAIL", id, name, secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
