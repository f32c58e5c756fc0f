#include "hsfem/detsolver.hpp"

#include "hsfem/binary_io.hpp"

#include <map>
#include <utility>
#include <vector>

namespace hsfem {

StiffnessAssembler::StiffnessAssembler(const Mesh& mesh) {
  const Index n = mesh.interior_count();
  const Index E = mesh.element_count();

  // (row, col) -> list of (element, weight)
  std::map<std::pair<Index, Index>, std::vector<std::pair<Index, double>>> entries;
  for (Index e = 0; e < E; ++e) {
    const auto& el = mesh.element(e);
    const double meas = mesh.element_measure(e);
    for (std::size_t a = 0; a < el.size(); ++a) {
      const Index ia = mesh.interior_index(el[a]);
      if (ia < 0) continue;
      for (std::size_t b = 0; b < el.size(); ++b) {
        const Index ib = mesh.interior_index(el[b]);
        if (ib < 0) continue;
        const Point& ga = mesh.gradient(e, static_cast<int>(a));
        const Point& gb = mesh.gradient(e, static_cast<int>(b));
        const double g = meas * (ga[0] * gb[0] + (mesh.dim() == 2 ? ga[1] * gb[1] : 0.0));
        entries[{ib, ia}].emplace_back(e, g);  // keyed (col, row) for column-major order
      }
    }
  }

  std::vector<Eigen::Triplet<double>> pat, map;
  Index slot = 0;
  for (const auto& [key, contrib] : entries) {
    const auto [col, row] = key;
    pat.emplace_back(row, col, 1.0);
    slot_row_.push_back(row);
    slot_col_.push_back(col);
    for (const auto& [e, g] : contrib) map.emplace_back(slot, e, g);
    ++slot;
  }
  pattern_.resize(n, n);
  pattern_.setFromTriplets(pat.begin(), pat.end());
  pattern_.makeCompressed();
  pattern_.coeffs().setZero();
  map_.resize(slot, E);
  map_.setFromTriplets(map.begin(), map.end());
}

void StiffnessAssembler::assemble(const Eigen::Ref<const Vector>& element_coef, SparseMatrix& A) const {
  Eigen::Map<Vector>(A.valuePtr(), A.nonZeros()) = map_ * element_coef;
}

SparseMatrix StiffnessAssembler::assemble(const Eigen::Ref<const Vector>& element_coef) const {
  SparseMatrix A = pattern_;
  assemble(element_coef, A);
  return A;
}

DeterministicSolver::DeterministicSolver(std::shared_ptr<const StiffnessAssembler> assembler)
    : assembler_(std::move(assembler)), A_(assembler_->pattern()) {
  ldlt_.analyzePattern(A_);
}

void DeterministicSolver::factorize(const Eigen::Ref<const Vector>& element_coef) {
  assembler_->assemble(element_coef, A_);
  ldlt_.factorize(A_);
  if (ldlt_.info() != Eigen::Success) throw NumericalError("sparse LDL^T factorization failed");
  if ((ldlt_.vectorD().array() <= 0.0).any()) throw NumericalError("stiffness matrix is not positive definite");
}

Matrix DeterministicSolver::solve(const Matrix& rhs) const {
  Matrix U = ldlt_.solve(rhs);
  const Vector bnorm = rhs.colwise().norm();
  for (int refine = 0; refine < 3; ++refine) {
    const Matrix R = rhs - A_ * U;
    const Vector rnorm = R.colwise().norm();
    bool ok = true;
    for (Index c = 0; c < U.cols(); ++c) {
      if (rnorm[c] > tolerance * bnorm[c]) ok = false;
    }
    if (ok) return U;
    U += ldlt_.solve(R);
  }
  const Matrix R = rhs - A_ * U;
  for (Index c = 0; c < U.cols(); ++c) {
    const double rel = R.col(c).norm() / bnorm[c];
    if (rel > tolerance) {
      throw NumericalError("deterministic solve stalled at relative residual " + std::to_string(rel) +
                           " (column " + std::to_string(c) + ", target " + std::to_string(tolerance) + ")");
    }
  }
  return U;
}

Vector solve_deterministic(const Mesh& mesh, const CoefficientModel& model, const Vector& theta, const Forcing& f) {
  const CentroidCoefficients cc(mesh, model);
  Vector a(mesh.element_count());
  cc.evaluate(theta, a);
  DeterministicSolver solver(std::make_shared<StiffnessAssembler>(mesh));
  solver.factorize(a);
  const Vector b = load_vector(mesh, f);
  return extend_by_zero(mesh, solver.solve(b).col(0));
}

void solve_samples(const Mesh& mesh, const CoefficientModel& model, const Matrix& thetas, const Matrix& rhs,
                   const std::function<void(Index, const Matrix&)>& sink) {
  if (rhs.rows() != mesh.interior_count()) throw ConfigError("right-hand side size does not match the mesh");
  const CentroidCoefficients cc(mesh, model);
  auto assembler = std::make_shared<StiffnessAssembler>(mesh);
  const int workers = thread_count();
  std::vector<std::unique_ptr<DeterministicSolver>> solvers(workers);
  std::vector<Vector> coef(workers, Vector(mesh.element_count()));
  const bool zero_rhs = rhs.size() == 0 || rhs.isZero(0.0);

  parallel_for_workers(thetas.rows(), [&](int w, Index p) {
    try {
      if (zero_rhs) {
        sink(p, Matrix::Zero(rhs.rows(), rhs.cols()));
        return;
      }
      if (!solvers[w]) solvers[w] = std::make_unique<DeterministicSolver>(assembler);
      cc.evaluate(thetas.row(p).transpose(), coef[w]);
      solvers[w]->factorize(coef[w]);
      sink(p, solvers[w]->solve(rhs));
    } catch (const Error& e) {
      const std::string msg = "sample " + std::to_string(p) + ": " + e.what();
      if (e.kind() == ErrorKind::Model) throw ModelError(msg);
      if (e.kind() == ErrorKind::Numerical) throw NumericalError(msg);
      throw;
    }
  });
}

Ensemble solve_ensemble(MeshPtr mesh, const CoefficientModel& model, SampleSetPtr samples, const Forcing& f) {
  Ensemble ens;
  ens.mesh = mesh;
  ens.samples = samples;
  ens.forcing = f.descriptor();
  ens.values.resize(mesh->interior_count(), samples->size());
  const Vector b = load_vector(*mesh, f);
  solve_samples(*mesh, model, samples->points, b, [&](Index p, const Matrix& U) { ens.values.col(p) = U.col(0); });
  return ens;
}

namespace {
constexpr char kEnsembleMagic[9] = "HSFEMENS";
}

void save_ensemble(const Ensemble& ens, const std::string& path) {
  const SampleSet& s = *ens.samples;
  nlohmann::json header{{"dim", ens.mesh->dim()},
                        {"cells", ens.mesh->cells()},
                        {"forcing", ens.forcing},
                        {"n", ens.values.rows()},
                        {"m", s.dimension},
                        {"M", s.size()},
                        {"kind", s.kind == SampleKind::MonteCarlo ? "mc" : "smolyak"},
                        {"measure", to_string(s.measure)},
                        {"seed", s.seed},
                        {"order", s.order},
                        {"sample_hash", s.hash()}};
  BinaryWriter w(path, kEnsembleMagic, 1, header);
  w.write_doubles(s.points);
  w.write_doubles(s.weights);
  w.write_doubles(ens.values);
  w.close();
}

Ensemble load_ensemble(const std::string& path) {
  BinaryReader r(path, kEnsembleMagic, 1);
  const auto& h = r.header();
  Ensemble ens;
  try {
    ens.mesh = std::make_shared<Mesh>(Mesh::uniform(h.at("dim").get<int>(), h.at("cells").get<int>()));
    auto s = std::make_shared<SampleSet>();
    s->dimension = h.at("m").get<int>();
    s->kind = h.at("kind").get<std::string>() == "mc" ? SampleKind::MonteCarlo : SampleKind::Smolyak;
    s->measure = measure_from_string(h.at("measure").get<std::string>());
    s->seed = h.at("seed").get<std::uint64_t>();
    s->order = h.at("order").get<int>();
    const Index M = h.at("M").get<Index>();
    s->points = r.read_matrix(M, s->dimension);
    s->weights = r.read_vector(M);
    if (s->hash() != h.at("sample_hash").get<std::string>()) throw IoError(path + ": sample-set hash mismatch");
    ens.samples = s;
    ens.forcing = h.at("forcing");
    ens.values = r.read_matrix(h.at("n").get<Index>(), M);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed ensemble header: " + e.what());
  }
  if (ens.values.rows() != ens.mesh->interior_count()) throw IoError(path + ": ensemble size does not match its mesh");
  return ens;
}

}  // namespace hsfem
