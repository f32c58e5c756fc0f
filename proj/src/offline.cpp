#include "hsfem/offline.hpp"

#include "hsfem/binary_io.hpp"
#include "hsfem/random.hpp"
#include "hsfem/rangefinder.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>

namespace hsfem {

nlohmann::json OfflineOptions::to_json() const {
  return {{"K", K},
          {"r", r},
          {"epsilon", epsilon},
          {"seed", seed},
          {"coarse_cells", coarse_cells},
          {"allow_growth", allow_growth},
          {"max_growth_rounds", max_growth_rounds}};
}

OfflineOptions OfflineOptions::from_json(const nlohmann::json& j) {
  OfflineOptions o;
  try {
    o.K = j.value("K", o.K);
    o.r = j.value("r", o.r);
    o.epsilon = j.value("epsilon", o.epsilon);
    o.seed = j.value("seed", o.seed);
    o.coarse_cells = j.value("coarse_cells", o.coarse_cells);
    o.allow_growth = j.value("allow_growth", o.allow_growth);
    o.max_growth_rounds = j.value("max_growth_rounds", o.max_growth_rounds);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("offline options: ") + e.what());
  }
  return o;
}

Index LocalBasis::total_size() const {
  Index s = 0;
  for (int ki : k) s += ki + 1;
  return s;
}

std::vector<Index> LocalBasis::offsets() const {
  std::vector<Index> off(k.size());
  Index s = 0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    off[i] = s;
    s += k[i] + 1;
  }
  return off;
}

double LocalBasis::average_k() const {
  if (k.empty()) return 0.0;
  return static_cast<double>(std::accumulate(k.begin(), k.end(), 0LL)) / static_cast<double>(k.size());
}

int LocalBasis::max_k() const { return k.empty() ? 0 : *std::max_element(k.begin(), k.end()); }

int LocalBasis::saturated_count() const {
  return static_cast<int>(std::count(saturated.begin(), saturated.end(), std::uint8_t{1}));
}

Matrix LocalBasis::extended(Index node) const {
  const Matrix& x = xi[node];
  Matrix out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

RandomFunction LocalBasis::function(Index node, int j) const {
  if (j < 0 || j > k[node]) throw ConfigError("basis index out of range");
  return RandomFunction(samples, j == 0 ? Vector(Vector::Ones(samples->size())) : Vector(xi[node].col(j - 1)));
}

namespace {

void remove_weighted_mean(Matrix& Y, const Vector& w) {
  const Vector mu = Y.transpose() * w;
  Y.rowwise() -= mu.transpose();
}

struct NodeResult {
  Matrix xi;
  int k = 0;
  bool saturated = false;
};

// Gram matrix of the sketch traces, eigendecomposition, scaled combinations,
// then the smallest size whose probe residuals pass.
NodeResult node_basis(const Matrix& sketch, const Matrix& probes, const InnerProduct& ip, double threshold,
                      Index node) {
  NodeResult out;
  Matrix basis(sketch.rows(), 0);
  const Matrix C = ip.gram(sketch);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (C + C.transpose()));
  if (eig.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition of the Gram matrix failed at interior node " + std::to_string(node));
  }
  const Vector lam = eig.eigenvalues().reverse();
  const Matrix V = eig.eigenvectors().rowwise().reverse();
  Index keep = 0;
  while (keep < lam.size() && lam[keep] > 1e-14 * lam[0] && lam[keep] > 0.0) ++keep;
  if (keep > 0) {
    basis = sketch * V.leftCols(keep) * lam.head(keep).cwiseSqrt().cwiseInverse().asDiagonal();
    reorthonormalize(basis, ip);
    normalize_signs(basis);
  }
  const Index gamma = minimal_passing_size(basis, probes, ip, threshold);
  if (gamma < 0) {
    out.saturated = true;
    out.k = static_cast<int>(keep);
    out.xi = std::move(basis);
  } else {
    out.k = static_cast<int>(gamma);
    out.xi = basis.leftCols(gamma);
  }
  return out;
}

}  // namespace

LocalBasis build_local_basis(const Mesh& mesh, const CoefficientModel& model, SampleSetPtr samples,
                             const FourierDict& dict, const OfflineOptions& opt) {
  if (!samples) throw ConfigError("offline stage needs a sample set");
  if (opt.K < 1 || opt.r < 1) throw ConfigError("offline stage needs K >= 1 and r >= 1");
  if (!(opt.epsilon > 0.0)) throw ConfigError("offline stage needs epsilon > 0");
  if (opt.coarse_cells < 0 || opt.coarse_cells > mesh.cells()) {
    throw ConfigError("coarse mesh must have between 1 and " + std::to_string(mesh.cells()) + " cells per axis");
  }
  const bool coarse = opt.coarse_cells > 0;
  const Mesh solve_mesh = coarse ? Mesh::uniform(mesh.dim(), opt.coarse_cells) : mesh;
  if (dict.dim() != mesh.dim() || dict.l() != FourierDict::for_mesh(solve_mesh).l()) {
    throw ConfigError("Fourier dictionary (l=" + std::to_string(dict.l()) + ") does not match the sampling mesh (l=" +
                      std::to_string(FourierDict::for_mesh(solve_mesh).l()) + ")");
  }
  const SparseMatrix P = coarse ? solve_mesh.interior_interpolation_to(mesh) : SparseMatrix();

  const Index n = mesh.interior_count();
  const Index M = samples->size();
  const Index N = dict.size();
  const InnerProduct ip(samples->weights);
  const double threshold = probe_threshold(opt.epsilon);

  const Matrix B = dictionary_load_matrix(solve_mesh, dict);
  RandomSource sketch_rng(opt.seed, Stream::Sketch), probe_rng(opt.seed, Stream::Probe);
  const Matrix omega = sketch_rng.gaussian_matrix(N, opt.K);
  const Matrix omega_probe = probe_rng.gaussian_matrix(N, opt.r);
  Matrix F(B.rows(), opt.K + opt.r);
  F << B * omega, B * omega_probe;

  std::vector<Matrix> sketch(n, Matrix(M, opt.K)), probe(n, Matrix(M, opt.r));
  solve_samples(solve_mesh, model, samples->points, F, [&](Index p, const Matrix& U) {
    const Matrix Uf = coarse ? Matrix(P * U) : U;
    for (Index i = 0; i < n; ++i) {
      sketch[i].row(p) = Uf.row(i).head(opt.K);
      probe[i].row(p) = Uf.row(i).tail(opt.r);
    }
  });
  parallel_for(n, [&](Index i) {
    remove_weighted_mean(sketch[i], samples->weights);
    remove_weighted_mean(probe[i], samples->weights);
  });

  LocalBasis out;
  out.samples = samples;
  out.options = opt;
  out.xi.resize(n);
  out.k.assign(n, 0);
  out.saturated.assign(n, 0);

  std::vector<Index> pending(n);
  std::iota(pending.begin(), pending.end(), Index{0});
  Index width = opt.K;
  for (;;) {
    parallel_for(static_cast<Index>(pending.size()), [&](Index t) {
      const Index i = pending[t];
      NodeResult res = node_basis(sketch[i], probe[i], ip, threshold, i);
      out.xi[i] = std::move(res.xi);
      out.k[i] = res.k;
      out.saturated[i] = res.saturated ? 1 : 0;
    });
    std::vector<Index> still;
    for (Index i : pending) {
      if (out.saturated[i]) still.push_back(i);
    }
    pending = std::move(still);
    if (pending.empty() || !opt.allow_growth) break;
    if (out.growth_rounds >= opt.max_growth_rounds) {
      throw NumericalError(std::to_string(pending.size()) + " nodes still saturated after " +
                           std::to_string(out.growth_rounds) + " sketch doublings (K=" + std::to_string(width) + ")");
    }
    // Double the sketch of the saturated nodes with fresh columns from the same stream.
    const Matrix extra_omega = sketch_rng.gaussian_matrix(N, width);
    const Matrix Fx = B * extra_omega;
    std::vector<Matrix> extra(pending.size(), Matrix(M, width));
    solve_samples(solve_mesh, model, samples->points, Fx, [&](Index p, const Matrix& U) {
      const Matrix Uf = coarse ? Matrix(P * U) : U;
      for (std::size_t t = 0; t < pending.size(); ++t) extra[t].row(p) = Uf.row(pending[t]);
    });
    for (std::size_t t = 0; t < pending.size(); ++t) {
      remove_weighted_mean(extra[t], samples->weights);
      Matrix& s = sketch[pending[t]];
      Matrix grown(M, s.cols() + width);
      grown << s, extra[t];
      s = std::move(grown);
    }
    width *= 2;
    ++out.growth_rounds;
    spdlog::info("offline: {} saturated nodes, sketch grown to K={}", pending.size(), width);
  }
  spdlog::info("offline: average k = {:.2f}, max k = {}, saturated nodes = {}", out.average_k(), out.max_k(),
               out.saturated_count());
  return out;
}

LocalBasis build_local_basis(const Mesh& mesh, const CoefficientModel& model, SampleSetPtr samples,
                             const OfflineOptions& options) {
  const Mesh solve_mesh = options.coarse_cells > 0 ? Mesh::uniform(mesh.dim(), options.coarse_cells) : mesh;
  return build_local_basis(mesh, model, std::move(samples), FourierDict::for_mesh(solve_mesh), options);
}

CoupledSystem::CoupledSystem(MeshPtr mesh, CoefficientModel model, std::shared_ptr<const LocalBasis> basis,
                             SparseMatrix sm)
    : mesh_(std::move(mesh)),
      model_(std::move(model)),
      basis_(std::move(basis)),
      offsets_(basis_->offsets()),
      sm_(std::move(sm)) {
  if (sm_.rows() != basis_->total_size() || sm_.cols() != sm_.rows()) {
    throw MismatchError("coupled matrix size does not match the local basis");
  }
  llt_.compute(sm_);
  if (llt_.info() != Eigen::Success) {
    std::string why = "the local basis may be degenerate";
    if (!basis_->samples->has_nonnegative_weights()) {
      why = "the sample set has negative weights, so sum_p w^p xi xi a is not guaranteed positive; use Monte Carlo "
            "samples or a smaller basis (larger epsilon)";
    }
    throw NumericalError("coupled stiffness matrix is not positive definite (Cholesky failed): " + why);
  }
}

Vector CoupledSystem::solve(const Vector& b) const {
  if (b.size() != size()) throw ConfigError("load vector length does not match the coupled system");
  Vector c = llt_.solve(b);
  const double bn = b.norm();
  for (int refine = 0; refine < 3; ++refine) {
    const Vector r = b - sm_ * c;
    if (r.norm() <= 1e-10 * bn) return c;
    c += llt_.solve(r);
  }
  const double rel = (b - sm_ * c).norm() / bn;
  if (rel > 1e-10) {
    throw NumericalError("coupled solve stalled at relative residual " + std::to_string(rel) +
                         "; the coupled matrix is numerically close to singular");
  }
  return c;
}

CoupledSystemPtr assemble_coupled(MeshPtr mesh, const CoefficientModel& model,
                                  std::shared_ptr<const LocalBasis> basis) {
  if (!basis || !basis->samples) throw ConfigError("coupled assembly needs a local basis with samples");
  if (basis->node_count() != mesh->interior_count()) {
    throw MismatchError("local basis has " + std::to_string(basis->node_count()) + " nodes but the mesh has " +
                        std::to_string(mesh->interior_count()) + " interior nodes");
  }
  const SampleSet& samples = *basis->samples;
  const StiffnessAssembler assembler(*mesh);
  const Matrix coef = CentroidCoefficients(*mesh, model).evaluate_all(samples);  // E x M
  const std::vector<Index> off = basis->offsets();

  std::vector<Index> upper;
  for (Index s = 0; s < assembler.slot_count(); ++s) {
    if (assembler.slot_row(s) <= assembler.slot_col(s)) upper.push_back(s);
  }
  std::vector<Matrix> blocks(upper.size());
  parallel_for(static_cast<Index>(upper.size()), [&](Index t) {
    const Index s = upper[t];
    const Vector a = (assembler.element_map().row(s) * coef).transpose();  // length M
    const Vector wa = samples.weights.cwiseProduct(a);
    const Matrix X1 = basis->extended(assembler.slot_row(s));
    const Matrix X2 = basis->extended(assembler.slot_col(s));
    Matrix blk = X1.transpose() * (wa.asDiagonal() * X2);
    if (assembler.slot_row(s) == assembler.slot_col(s)) blk = 0.5 * (blk + blk.transpose()).eval();
    blocks[t] = std::move(blk);
  });

  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t t = 0; t < upper.size(); ++t) {
    const Index i1 = assembler.slot_row(upper[t]), i2 = assembler.slot_col(upper[t]);
    const Matrix& blk = blocks[t];
    for (Index a = 0; a < blk.rows(); ++a) {
      for (Index b = 0; b < blk.cols(); ++b) {
        trip.emplace_back(off[i1] + a, off[i2] + b, blk(a, b));
        if (i1 != i2) trip.emplace_back(off[i2] + b, off[i1] + a, blk(a, b));
      }
    }
  }
  const Index S = basis->total_size();
  SparseMatrix sm(S, S);
  sm.setFromTriplets(trip.begin(), trip.end());
  sm.makeCompressed();
  return std::make_shared<CoupledSystem>(std::move(mesh), model, std::move(basis), std::move(sm));
}

Index TMatrix::rank_at(double eps) const { return (singular_values.array() > eps).count(); }

TMatrix tmatrix_explicit(const Mesh& mesh, const CoefficientModel& model, SampleSetPtr samples,
                         const FourierDict& dict, Index node) {
  if (node < 0 || node >= mesh.interior_count()) throw ConfigError("tmatrix node index out of range");
  if (dict.dim() != mesh.dim()) throw ConfigError("dictionary and mesh dimensions differ");
  const Matrix B = dictionary_load_matrix(mesh, dict);
  TMatrix out;
  out.T.resize(samples->size(), dict.size());
  solve_samples(mesh, model, samples->points, B, [&](Index p, const Matrix& U) { out.T.row(p) = U.row(node); });
  remove_weighted_mean(out.T, samples->weights);

  const Vector& w = samples->weights;
  if ((w.array() > 0.0).all()) {
    out.singular_values = Eigen::BDCSVD<Matrix>(w.cwiseSqrt().asDiagonal() * out.T).singularValues();
  } else {
    const Matrix G = out.T.transpose() * w.asDiagonal() * out.T;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (G + G.transpose()), Eigen::EigenvaluesOnly);
    out.singular_values = eig.eigenvalues().reverse().cwiseMax(0.0).cwiseSqrt();
  }
  return out;
}

namespace {

constexpr char kArtifactMagic[9] = "HSFEMART";

nlohmann::json sample_header(const SampleSet& s) {
  return {{"m", s.dimension},
          {"M", s.size()},
          {"kind", s.kind == SampleKind::MonteCarlo ? "mc" : "smolyak"},
          {"measure", to_string(s.measure)},
          {"seed", s.seed},
          {"order", s.order},
          {"hash", s.hash()}};
}

}  // namespace

void save_artifact(const OfflineArtifact& art, const std::string& path) {
  const CoupledSystem& sys = *art.system;
  const LocalBasis& basis = sys.basis();
  const SparseMatrix& sm = sys.matrix();

  std::vector<std::int64_t> rows, cols;
  std::vector<double> vals;
  for (Index c = 0; c < sm.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(sm, c); it; ++it) {
      if (it.row() <= it.col()) {
        rows.push_back(it.row());
        cols.push_back(it.col());
        vals.push_back(it.value());
      }
    }
  }
  std::vector<int> sat(basis.saturated.begin(), basis.saturated.end());
  const nlohmann::json header{{"config", art.config},
                              {"mesh", {{"dim", sys.mesh().dim()}, {"cells", sys.mesh().cells()}}},
                              {"coefficient", sys.model().to_json()},
                              {"offline", basis.options.to_json()},
                              {"samples", sample_header(*basis.samples)},
                              {"k", basis.k},
                              {"saturated", sat},
                              {"growth_rounds", basis.growth_rounds},
                              {"S", sys.size()},
                              {"nnz_upper", vals.size()}};
  BinaryWriter w(path, kArtifactMagic, 1, header);
  w.write_doubles(basis.samples->points);
  w.write_doubles(basis.samples->weights);
  for (const Matrix& x : basis.xi) w.write_doubles(x);
  w.write_int64s(rows);
  w.write_int64s(cols);
  w.write_doubles(vals.data(), vals.size());
  w.close();
}

OfflineArtifact load_artifact(const std::string& path) {
  BinaryReader r(path, kArtifactMagic, 1);
  const auto& h = r.header();
  OfflineArtifact art;
  try {
    art.config = h.at("config");
    auto mesh = std::make_shared<Mesh>(Mesh::uniform(h.at("mesh").at("dim").get<int>(),
                                                     h.at("mesh").at("cells").get<int>()));
    const CoefficientModel model = CoefficientModel::from_json(h.at("coefficient"));
    const auto& sh = h.at("samples");
    auto samples = std::make_shared<SampleSet>();
    samples->dimension = sh.at("m").get<int>();
    samples->kind = sh.at("kind").get<std::string>() == "mc" ? SampleKind::MonteCarlo : SampleKind::Smolyak;
    samples->measure = measure_from_string(sh.at("measure").get<std::string>());
    samples->seed = sh.at("seed").get<std::uint64_t>();
    samples->order = sh.at("order").get<int>();
    const Index M = sh.at("M").get<Index>();
    samples->points = r.read_matrix(M, samples->dimension);
    samples->weights = r.read_vector(M);
    if (samples->hash() != sh.at("hash").get<std::string>()) throw IoError(path + ": embedded sample set is corrupt");

    auto basis = std::make_shared<LocalBasis>();
    basis->samples = samples;
    basis->options = OfflineOptions::from_json(h.at("offline"));
    basis->k = h.at("k").get<std::vector<int>>();
    for (int s : h.at("saturated").get<std::vector<int>>()) basis->saturated.push_back(static_cast<std::uint8_t>(s));
    basis->growth_rounds = h.at("growth_rounds").get<int>();
    if (static_cast<Index>(basis->k.size()) != mesh->interior_count()) {
      throw IoError(path + ": basis node count does not match the mesh");
    }
    for (int ki : basis->k) basis->xi.push_back(r.read_matrix(M, ki));

    const std::size_t nnz = h.at("nnz_upper").get<std::size_t>();
    const auto rows = r.read_int64s(nnz);
    const auto cols = r.read_int64s(nnz);
    std::vector<double> vals(nnz);
    r.read_doubles(vals.data(), nnz);
    const Index S = h.at("S").get<Index>();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(2 * nnz);
    for (std::size_t t = 0; t < nnz; ++t) {
      if (rows[t] < 0 || rows[t] >= S || cols[t] < 0 || cols[t] >= S) throw IoError(path + ": matrix index out of range");
      trip.emplace_back(rows[t], cols[t], vals[t]);
      if (rows[t] != cols[t]) trip.emplace_back(cols[t], rows[t], vals[t]);
    }
    SparseMatrix sm(S, S);
    sm.setFromTriplets(trip.begin(), trip.end());
    sm.makeCompressed();
    art.system = std::make_shared<CoupledSystem>(mesh, model, basis, std::move(sm));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed artifact header: " + e.what());
  }
  return art;
}

nlohmann::json artifact_summary(const OfflineArtifact& art) {
  const CoupledSystem& sys = *art.system;
  const LocalBasis& b = sys.basis();
  std::vector<std::vector<double>> coords;
  for (Index i = 0; i < sys.mesh().interior_count(); ++i) {
    const Point& x = sys.mesh().node(sys.mesh().interior_node(i));
    coords.push_back(sys.mesh().dim() == 1 ? std::vector<double>{x[0]} : std::vector<double>{x[0], x[1]});
  }
  std::vector<int> sat(b.saturated.begin(), b.saturated.end());
  return {{"k_average", b.average_k()},
          {"k_max", b.max_k()},
          {"S", sys.size()},
          {"n_interior", b.node_count()},
          {"M", b.samples->size()},
          {"saturated_count", b.saturated_count()},
          {"growth_rounds", b.growth_rounds},
          {"k_i", b.k},
          {"saturated", sat},
          {"node_coordinates", coords},
          {"sample_hash", b.samples->hash()},
          {"offline", b.options.to_json()},
          {"mesh", {{"dim", sys.mesh().dim()}, {"cells", sys.mesh().cells()}}},
          {"coefficient", sys.model().to_json()}};
}

}  // namespace hsfem
