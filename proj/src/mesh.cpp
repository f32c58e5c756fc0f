#include "hsfem/mesh.hpp"

#include "hsfem/quadrature.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace hsfem {

namespace {

constexpr double kSnap = 1e-12;

// Cell index and local coordinate of x along one axis; snaps to grid lines so
// that points on nodes get exact 0/1 barycentric weights.
void axis_locate(double x, int cells, int& cell, double& local) {
  double scaled = x * cells;
  const double nearest = std::round(scaled);
  if (std::abs(scaled - nearest) < kSnap) scaled = nearest;
  cell = std::clamp(static_cast<int>(std::floor(scaled)), 0, cells - 1);
  local = scaled - cell;
}

}  // namespace

Mesh Mesh::uniform(int dim, double h) {
  if (!(h > 0.0)) throw ConfigError("mesh size h must be positive");
  const double inv = 1.0 / h;
  const double rounded = std::round(inv);
  if (rounded < 1.0 || std::abs(inv - rounded) > 1e-9 * rounded) {
    throw ConfigError("1/h must be a positive integer, got 1/h = " + std::to_string(inv));
  }
  return uniform(dim, static_cast<int>(rounded));
}

Mesh Mesh::uniform(int dim, int cells) {
  if (dim != 1 && dim != 2) throw ConfigError("mesh dimension must be 1 or 2");
  if (cells < 1) throw ConfigError("mesh needs at least one cell");
  Mesh m;
  m.dim_ = dim;
  m.cells_ = cells;
  const double h = 1.0 / cells;
  const int per_axis = cells + 1;

  if (dim == 1) {
    for (int i = 0; i < per_axis; ++i) m.nodes_.push_back({i * h, 0.0});
    for (int j = 0; j < cells; ++j) {
      m.elements_.push_back({j, j + 1});
      m.measure_.push_back(h);
      m.grads_.push_back({Point{-1.0 / h, 0.0}, Point{1.0 / h, 0.0}, Point{0.0, 0.0}});
    }
  } else {
    for (int iy = 0; iy < per_axis; ++iy)
      for (int ix = 0; ix < per_axis; ++ix) m.nodes_.push_back({ix * h, iy * h});
    auto id = [per_axis](int ix, int iy) { return iy * per_axis + ix; };
    for (int iy = 0; iy < cells; ++iy) {
      for (int ix = 0; ix < cells; ++ix) {
        const int n00 = id(ix, iy), n10 = id(ix + 1, iy), n11 = id(ix + 1, iy + 1), n01 = id(ix, iy + 1);
        m.elements_.push_back({n00, n10, n11});
        m.elements_.push_back({n00, n11, n01});
      }
    }
    for (const auto& tri : m.elements_) {
      const Point& p0 = m.nodes_[tri[0]];
      const Point& p1 = m.nodes_[tri[1]];
      const Point& p2 = m.nodes_[tri[2]];
      const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
      m.measure_.push_back(0.5 * std::abs(det));
      m.grads_.push_back({Point{(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det},
                          Point{(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det},
                          Point{(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det}});
    }
  }

  m.interior_index_.assign(m.nodes_.size(), -1);
  for (Index i = 0; i < m.node_count(); ++i) {
    const Index ix = i % per_axis, iy = i / per_axis;
    const bool boundary = ix == 0 || ix == cells || (dim == 2 && (iy == 0 || iy == cells));
    if (!boundary) {
      m.interior_index_[i] = static_cast<Index>(m.interior_nodes_.size());
      m.interior_nodes_.push_back(i);
    }
  }
  return m;
}

Point Mesh::centroid(Index e) const {
  Point c{0.0, 0.0};
  const auto& el = elements_[e];
  for (int v : el) {
    c[0] += nodes_[v][0];
    c[1] += nodes_[v][1];
  }
  c[0] /= static_cast<double>(el.size());
  c[1] /= static_cast<double>(el.size());
  return c;
}

Index Mesh::locate(const Point& x, std::array<double, 3>& bary) const {
  int ix;
  double s;
  axis_locate(x[0], cells_, ix, s);
  if (dim_ == 1) {
    bary = {1.0 - s, s, 0.0};
    return ix;
  }
  int iy;
  double t;
  axis_locate(x[1], cells_, iy, t);
  const Index cell = static_cast<Index>(iy) * cells_ + ix;
  if (t <= s) {
    bary = {1.0 - s, s - t, t};
    return 2 * cell;
  }
  bary = {1.0 - t, s, t - s};
  return 2 * cell + 1;
}

Eigen::SparseMatrix<double> Mesh::interior_mass_matrix() const {
  std::vector<Eigen::Triplet<double>> trips;
  const int nv = vertices_per_element();
  for (Index e = 0; e < element_count(); ++e) {
    const double scale = dim_ == 1 ? measure_[e] / 6.0 : measure_[e] / 12.0;
    for (int a = 0; a < nv; ++a) {
      const Index ia = interior_index_[elements_[e][a]];
      if (ia < 0) continue;
      for (int b = 0; b < nv; ++b) {
        const Index ib = interior_index_[elements_[e][b]];
        if (ib < 0) continue;
        trips.emplace_back(ia, ib, scale * (a == b ? 2.0 : 1.0));
      }
    }
  }
  Eigen::SparseMatrix<double> mass(interior_count(), interior_count());
  mass.setFromTriplets(trips.begin(), trips.end());
  return mass;
}

Eigen::SparseMatrix<double> Mesh::interior_laplacian() const {
  std::vector<Eigen::Triplet<double>> trips;
  const int nv = vertices_per_element();
  for (Index e = 0; e < element_count(); ++e) {
    for (int a = 0; a < nv; ++a) {
      const Index ia = interior_index_[elements_[e][a]];
      if (ia < 0) continue;
      for (int b = 0; b < nv; ++b) {
        const Index ib = interior_index_[elements_[e][b]];
        if (ib < 0) continue;
        const Point& ga = grads_[e][a];
        const Point& gb = grads_[e][b];
        trips.emplace_back(ia, ib, measure_[e] * (ga[0] * gb[0] + ga[1] * gb[1]));
      }
    }
  }
  Eigen::SparseMatrix<double> lap(interior_count(), interior_count());
  lap.setFromTriplets(trips.begin(), trips.end());
  return lap;
}

Eigen::SparseMatrix<double> Mesh::interior_interpolation_to(const Mesh& fine) const {
  if (fine.dim_ != dim_) throw ConfigError("interpolation between meshes of different dimension");
  Eigen::SparseMatrix<double> op(fine.interior_count(), interior_count());
  std::vector<Eigen::Triplet<double>> trips;
  if (fine.cells_ == cells_) {
    for (Index k = 0; k < interior_count(); ++k) trips.emplace_back(k, k, 1.0);
  } else {
    std::array<double, 3> bary;
    for (Index k = 0; k < fine.interior_count(); ++k) {
      const Index e = locate(fine.node(fine.interior_node(k)), bary);
      for (int a = 0; a < vertices_per_element(); ++a) {
        const Index ia = interior_index_[elements_[e][a]];
        if (ia >= 0 && bary[a] != 0.0) trips.emplace_back(k, ia, bary[a]);
      }
    }
  }
  op.setFromTriplets(trips.begin(), trips.end());
  return op;
}

std::string Mesh::to_json() const {
  nlohmann::json j;
  j["dim"] = dim_;
  j["h"] = h();
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (const auto& p : nodes_) {
    if (dim_ == 1)
      nodes.push_back({p[0]});
    else
      nodes.push_back({p[0], p[1]});
  }
  j["elements"] = elements_;
  j["interior"] = interior_nodes_;
  return j.dump();
}

P1Function::P1Function(const Mesh& mesh, Vector nodal_values) : mesh_(&mesh), values_(std::move(nodal_values)) {
  if (values_.size() != mesh.node_count()) {
    throw ConfigError("P1 interpolant expects " + std::to_string(mesh.node_count()) + " nodal values, got " +
                      std::to_string(values_.size()));
  }
}

double P1Function::operator()(const Point& x) const {
  std::array<double, 3> bary;
  const Index e = mesh_->locate(x, bary);
  const auto& el = mesh_->element(e);
  double v = 0.0;
  for (std::size_t a = 0; a < el.size(); ++a) v += bary[a] * values_[el[a]];
  return v;
}

P1Function interp_p1(const Mesh& mesh, const Vector& nodal_values) { return P1Function(mesh, nodal_values); }

Vector extend_by_zero(const Mesh& mesh, const Vector& interior_values) {
  if (interior_values.size() != mesh.interior_count()) throw ConfigError("interior vector length mismatch");
  Vector full = Vector::Zero(mesh.node_count());
  for (Index k = 0; k < mesh.interior_count(); ++k) full[mesh.interior_node(k)] = interior_values[k];
  return full;
}

ElementQuadrature element_quadrature(const Mesh& mesh, Index e, int order) {
  const Rule1d g = gauss_legendre(order, 0.0, 1.0);
  const auto& el = mesh.element(e);
  ElementQuadrature q;
  if (mesh.dim() == 1) {
    const Point& p0 = mesh.node(el[0]);
    const Point& p1 = mesh.node(el[1]);
    for (int k = 0; k < order; ++k) {
      const double t = g.nodes[k];
      q.points.push_back({p0[0] + t * (p1[0] - p0[0]), 0.0});
      q.weights.push_back(g.weights[k] * mesh.element_measure(e));
      q.bary.push_back({1.0 - t, t, 0.0});
    }
    return q;
  }
  const Point& p0 = mesh.node(el[0]);
  const Point& p1 = mesh.node(el[1]);
  const Point& p2 = mesh.node(el[2]);
  for (int a = 0; a < order; ++a) {
    for (int b = 0; b < order; ++b) {
      const double xi = g.nodes[a];
      const double eta = (1.0 - xi) * g.nodes[b];
      // Reference triangle has area 1/2; Duffy Jacobian is (1 - xi).
      const double w = g.weights[a] * g.weights[b] * (1.0 - xi) * 2.0 * mesh.element_measure(e);
      q.points.push_back({p0[0] + xi * (p1[0] - p0[0]) + eta * (p2[0] - p0[0]),
                          p0[1] + xi * (p1[1] - p0[1]) + eta * (p2[1] - p0[1])});
      q.weights.push_back(w);
      q.bary.push_back({1.0 - xi - eta, xi, eta});
    }
  }
  return q;
}

}  // namespace hsfem
