#include "hsfem/online.hpp"

#include <cmath>

namespace hsfem {

Vector load_vector(const CoupledSystem& system, const Forcing& f) {
  const Vector base = load_vector(system.mesh(), f);
  const LocalBasis& basis = system.basis();
  const Vector& w = basis.samples->weights;
  const double total = w.sum();
  Vector b = Vector::Zero(system.size());
  for (Index i = 0; i < basis.node_count(); ++i) {
    b[system.index(i, 0)] = total * base[i];
    for (int j = 1; j <= basis.k[i]; ++j) {
      const double v = w.dot(basis.xi[i].col(j - 1)) * base[i];
      b[system.index(i, j)] = std::abs(v) < 1e-12 ? 0.0 : v;
    }
  }
  return b;
}

HsfemSolution solve_online(CoupledSystemPtr system, const Forcing& f) {
  HsfemSolution sol;
  sol.load = load_vector(system->mesh(), f);
  sol.forcing = f.descriptor();
  const Vector b = load_vector(*system, f);
  sol.c = b.isZero(0.0) ? Vector(Vector::Zero(system->size())) : system->solve(b);
  sol.system = std::move(system);
  return sol;
}

Vector HsfemSolution::mean() const {
  const LocalBasis& basis = system->basis();
  Vector m(basis.node_count());
  for (Index i = 0; i < m.size(); ++i) m[i] = c[system->index(i, 0)];
  return m;
}

Vector HsfemSolution::sd() const {
  const LocalBasis& basis = system->basis();
  Vector s(basis.node_count());
  for (Index i = 0; i < s.size(); ++i) s[i] = c.segment(system->index(i, 1), basis.k[i]).norm();
  return s;
}

Matrix HsfemSolution::materialize() const {
  const LocalBasis& basis = system->basis();
  Matrix U(basis.node_count(), basis.samples->size());
  for (Index i = 0; i < U.rows(); ++i) {
    U.row(i).setConstant(c[system->index(i, 0)]);
    if (basis.k[i] > 0) U.row(i) += (basis.xi[i] * c.segment(system->index(i, 1), basis.k[i])).transpose();
  }
  return U;
}

Vector HsfemSolution::at_sample(Index p) const {
  const LocalBasis& basis = system->basis();
  Vector u(basis.node_count());
  for (Index i = 0; i < u.size(); ++i) {
    u[i] = c[system->index(i, 0)];
    if (basis.k[i] > 0) u[i] += basis.xi[i].row(p).dot(c.segment(system->index(i, 1), basis.k[i]));
  }
  return u;
}

std::pair<Vector, Vector> statistics(const HsfemSolution& sol) { return {sol.mean(), sol.sd()}; }

std::pair<Vector, Vector> trace_statistics(const Matrix& traces, const Vector& weights) {
  const Vector mean = traces * weights;
  const Matrix centered = traces.colwise() - mean;
  const Vector var = centered.cwiseAbs2() * weights;
  return {mean, var.cwiseMax(0.0).cwiseSqrt()};
}

double space_time_norm2(const SparseMatrix& mass, const Matrix& traces, const Vector& weights) {
  const Matrix MU = mass * traces;
  return (MU.cwiseProduct(traces).colwise().sum().transpose().array() * weights.array()).sum();
}

Metric e_hsfem(const HsfemSolution& sol, const Ensemble& reference) {
  const CoupledSystem& sys = *sol.system;
  if (reference.samples->hash() != sys.samples()->hash()) {
    throw MismatchError("reference ensemble and offline artifact use different sample sets");
  }
  if (reference.mesh->dim() != sys.mesh().dim() || reference.mesh->cells() != sys.mesh().cells()) {
    throw MismatchError("reference ensemble and offline artifact use different meshes");
  }
  const Vector& w = reference.samples->weights;
  const SparseMatrix mass = sys.mesh().interior_mass_matrix();
  const Vector mean = reference.values * w;
  const double den = space_time_norm2(mass, reference.values.colwise() - mean, w);
  if (!(std::sqrt(std::max(den, 0.0)) >= 1e-14)) {
    return Metric::undefined("reference ensemble is deterministic; the relative error has no denominator");
  }
  const double num = space_time_norm2(mass, reference.values - sol.materialize(), w);
  return {true, std::sqrt(std::max(num, 0.0) / den), {}};
}

}  // namespace hsfem
