#include "hsfem/rangefinder.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <spdlog/spdlog.h>

#include <cmath>
#include <deque>
#include <numbers>

namespace hsfem {

double InnerProduct::dot(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) const {
  if (!weights_) return a.dot(b);
  return (weights_->array() * a.array() * b.array()).sum();
}

double InnerProduct::norm(const Eigen::Ref<const Vector>& a) const { return std::sqrt(std::max(0.0, dot(a, a))); }

Vector InnerProduct::project(const Matrix& Q, const Eigen::Ref<const Vector>& x) const {
  if (!weights_) return Q.transpose() * x;
  return Q.transpose() * weights_->cwiseProduct(x);
}

Matrix InnerProduct::gram(const Matrix& Q) const {
  if (!weights_) return Q.transpose() * Q;
  return Q.transpose() * weights_->asDiagonal() * Q;
}

MatVecOperator MatVecOperator::from_matrix(Matrix A, InnerProduct ip) {
  const Index rows = A.rows(), cols = A.cols();
  if (const Vector* w = ip.weights(); w && w->size() != rows) {
    throw ConfigError("inner-product weights do not match the operator's output dimension");
  }
  return MatVecOperator(
      cols, rows, [A = std::move(A)](const Matrix& V) -> Matrix { return A * V; }, std::move(ip));
}

Matrix MatVecOperator::apply(const Matrix& V) const {
  if (V.rows() != in_) throw ConfigError("operator input has the wrong dimension");
  Matrix out = apply_(V);
  if (out.rows() != out_ || out.cols() != V.cols()) throw NumericalError("operator returned a block of the wrong shape");
  return out;
}

double probe_threshold(double epsilon) { return epsilon / (10.0 * std::sqrt(2.0 / std::numbers::pi)); }

double aposteriori_bound(const MatVecOperator& op_residual, const Matrix& probes, double alpha) {
  const Matrix Y = op_residual.apply(probes);
  double mx = 0.0;
  for (Index c = 0; c < Y.cols(); ++c) mx = std::max(mx, op_residual.inner_product().norm(Y.col(c)));
  return alpha * std::sqrt(2.0 / std::numbers::pi) * mx;
}

double aposteriori_bound(const MatVecOperator& op_residual, int r, double alpha, std::uint64_t seed) {
  if (r < 1) throw ConfigError("a-posteriori bound needs r >= 1 probes");
  RandomSource rng(seed, Stream::Probe);
  return aposteriori_bound(op_residual, rng.gaussian_matrix(op_residual.input_dim(), r), alpha);
}

namespace {

void orthogonalize(const std::vector<Vector>& Q, const InnerProduct& ip, Vector& y) {
  for (const Vector& q : Q) y -= ip.dot(q, y) * q;
}

}  // namespace

void normalize_signs(Matrix& U) {
  for (Index j = 0; j < U.cols(); ++j) {
    const double big = U.col(j).cwiseAbs().maxCoeff();
    for (Index p = 0; p < U.rows(); ++p) {
      if (std::abs(U(p, j)) > 1e-12 * big) {
        if (U(p, j) < 0.0) U.col(j) = -U.col(j);
        break;
      }
    }
  }
}

void reorthonormalize(Matrix& U, const InnerProduct& ip) {
  for (Index j = 0; j < U.cols(); ++j) {
    Vector v = U.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      if (j > 0) v -= U.leftCols(j) * ip.project(U.leftCols(j), v);
    }
    const double nrm = ip.norm(v);
    if (!(nrm > 0.0)) throw NumericalError("basis vector " + std::to_string(j) + " lost rank during re-orthonormalization");
    U.col(j) = v / nrm;
  }
}

RangeBasis adaptive_range_finder(const MatVecOperator& op, double epsilon, int r, std::uint64_t seed,
                                 Index max_iterations) {
  if (!(epsilon > 0.0)) throw ConfigError("range finder needs epsilon > 0");
  if (r < 1) throw ConfigError("range finder needs r >= 1");
  const InnerProduct& ip = op.inner_product();
  const Index cap = max_iterations < 0 ? op.input_dim() : max_iterations;

  RangeBasis out;
  out.threshold = probe_threshold(epsilon);
  RandomSource rng(seed, Stream::Probe);

  struct Probe {
    Vector y;
    double initial;
  };
  std::deque<Probe> window;
  std::vector<Vector> Q;
  auto draw = [&]() {
    const Matrix omega = rng.gaussian_matrix(op.input_dim(), 1);
    Vector y = op.apply(omega).col(0);
    const double initial = ip.norm(y);
    orthogonalize(Q, ip, y);
    ++out.probes_used;
    window.push_back({std::move(y), initial});
  };
  auto window_max = [&]() {
    double mx = 0.0;
    for (const auto& pr : window) mx = std::max(mx, ip.norm(pr.y));
    return mx;
  };

  for (int i = 0; i < r; ++i) draw();
  double current = window_max();
  out.probe_history.push_back(current);
  while (current > out.threshold) {
    if (static_cast<Index>(Q.size()) >= cap) {
      throw NumericalError("adaptive range finder hit its iteration cap of " + std::to_string(cap) +
                           " with probe residual " + std::to_string(current) + " above threshold " +
                           std::to_string(out.threshold));
    }
    Probe head = std::move(window.front());
    window.pop_front();
    orthogonalize(Q, ip, head.y);
    if (ip.norm(head.y) < 1e-8 * head.initial) orthogonalize(Q, ip, head.y);
    const double nrm = ip.norm(head.y);
    if (nrm > 0.0) {
      Q.push_back(head.y / nrm);
      const Vector& q = Q.back();
      for (auto& pr : window) pr.y -= ip.dot(q, pr.y) * q;
    }
    draw();
    current = window_max();
    out.probe_history.push_back(current);
    spdlog::debug("adaptive range finder: k={} max probe residual {:.3e}", Q.size(), current);
  }

  out.achieved = current;
  out.Q.resize(op.output_dim(), static_cast<Index>(Q.size()));
  for (std::size_t j = 0; j < Q.size(); ++j) out.Q.col(static_cast<Index>(j)) = Q[j];
  return out;
}

void weighted_svd(const Matrix& W, const InnerProduct& ip, Matrix& U, Vector& sigma, double cutoff) {
  const Vector* w = ip.weights();
  if (W.cols() == 0) {
    U.resize(W.rows(), 0);
    sigma.resize(0);
    return;
  }
  if (!w || (w->array() > 0.0).all()) {
    const Vector sw = w ? Vector(w->cwiseSqrt()) : Vector::Ones(W.rows());
    Eigen::BDCSVD<Matrix> svd(sw.asDiagonal() * W, Eigen::ComputeThinU);
    const Vector& s = svd.singularValues();
    Index keep = 0;
    while (keep < s.size() && s[keep] > cutoff * s[0] && s[keep] > 0.0) ++keep;
    sigma = s.head(keep);
    U = sw.cwiseInverse().asDiagonal() * svd.matrixU().leftCols(keep);
  } else {
    // Gram route: W^T diag(w) W = V diag(lambda) V^T, U = W V lambda^{-1/2}.
    const Matrix G = ip.gram(W);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (G + G.transpose()));
    if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of the sketch Gram matrix failed");
    const Vector lam = eig.eigenvalues().reverse();
    const Matrix V = eig.eigenvectors().rowwise().reverse();
    Index keep = 0;
    while (keep < lam.size() && lam[keep] > cutoff * lam[0] && lam[keep] > 0.0) ++keep;
    sigma = lam.head(keep).cwiseSqrt();
    U = W * V.leftCols(keep) * sigma.cwiseInverse().asDiagonal();
  }
  normalize_signs(U);
}

Index minimal_passing_size(const Matrix& U, const Matrix& probes, const InnerProduct& ip, double threshold,
                           std::vector<double>* history) {
  Matrix R = probes;
  Index found = -1;
  for (Index g = 0;; ++g) {
    double mx = 0.0;
    for (Index c = 0; c < R.cols(); ++c) mx = std::max(mx, ip.norm(R.col(c)));
    if (history) history->push_back(mx);
    if (found < 0 && mx <= threshold) {
      found = g;
      if (!history) return found;
    }
    if (g == U.cols()) break;
    const Vector u = U.col(g);
    for (Index c = 0; c < R.cols(); ++c) R.col(c) -= ip.dot(u, R.col(c)) * u;
  }
  return found;
}

RangeBasis svd_range_finder(const MatVecOperator& op, double epsilon, int r, Index K, std::uint64_t seed,
                            bool allow_growth, Index max_columns) {
  if (!(epsilon > 0.0)) throw ConfigError("range finder needs epsilon > 0");
  if (r < 1) throw ConfigError("range finder needs r >= 1");
  if (K < 1) throw ConfigError("range finder needs K >= 1");
  const InnerProduct& ip = op.inner_product();
  RangeBasis out;
  out.threshold = probe_threshold(epsilon);

  RandomSource probe_rng(seed, Stream::Probe), sketch_rng(seed, Stream::Sketch);
  const Matrix probes = op.apply(probe_rng.gaussian_matrix(op.input_dim(), r));
  out.probes_used = r;
  Matrix W = op.apply(sketch_rng.gaussian_matrix(op.input_dim(), K));

  for (;;) {
    Matrix U;
    Vector sigma;
    weighted_svd(W, ip, U, sigma);
    out.probe_history.clear();
    const Index gamma = minimal_passing_size(U, probes, ip, out.threshold, &out.probe_history);
    if (gamma >= 0) {
      out.Q = U.leftCols(gamma);
      out.achieved = out.probe_history[gamma];
      return out;
    }
    if (!allow_growth) {
      out.Q = U;
      out.saturated = true;
      out.achieved = out.probe_history.back();
      return out;
    }
    if (2 * W.cols() > max_columns) {
      throw NumericalError("sketch growth would exceed " + std::to_string(max_columns) + " columns (probe residual " +
                           std::to_string(out.probe_history.back()) + ")");
    }
    const Matrix extra = op.apply(sketch_rng.gaussian_matrix(op.input_dim(), W.cols()));
    Matrix grown(W.rows(), 2 * W.cols());
    grown << W, extra;
    W = std::move(grown);
    ++out.growth_rounds;
  }
}

}  // namespace hsfem
