#include "hsfem/klbaseline.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>

namespace hsfem {

double KlDecomposition::tail_error(Index k) const {
  if (total_variance <= 0.0) return 0.0;
  const Index kk = std::min(std::max<Index>(k, 0), rank());
  return std::sqrt(std::max(eigenvalues.tail(rank() - kk).sum() + discarded, 0.0) / total_variance);
}

KlDecomposition kl_expand(const Ensemble& ens) {
  const Vector& w = ens.samples->weights;
  const Index n = ens.values.rows(), M = ens.values.cols();
  KlDecomposition kl;
  kl.mean = ens.values * w;
  const Matrix X = ens.values.colwise() - kl.mean;
  const Matrix mass = Matrix(ens.mesh->interior_mass_matrix());
  kl.total_variance = std::max(0.0, ((mass * X).cwiseProduct(X).colwise().sum().transpose().array() * w.array()).sum());

  Vector lam;
  Matrix psi, xi;
  if (M < n && (w.array() > 0.0).all()) {
    const Vector sw = w.cwiseSqrt();
    const Matrix Xs = X * sw.asDiagonal();
    const Matrix G = Xs.transpose() * mass * Xs;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (G + G.transpose()));
    if (eig.info() != Eigen::Success) throw NumericalError("KL Gram eigendecomposition failed");
    lam = eig.eigenvalues().reverse();
    const Matrix Z = eig.eigenvectors().rowwise().reverse();
    Index r = 0;
    while (r < lam.size() && lam[r] > 1e-14 * lam[0] && lam[r] > 0.0) ++r;
    kl.discarded = lam.tail(lam.size() - r).sum();
    lam.conservativeResize(r);
    xi = sw.cwiseInverse().asDiagonal() * Z.leftCols(r);
    psi = X * w.asDiagonal() * xi * lam.cwiseSqrt().cwiseInverse().asDiagonal();
  } else {
    const Eigen::LLT<Matrix> chol(mass);
    if (chol.info() != Eigen::Success) throw NumericalError("mass matrix Cholesky failed");
    const Matrix L = chol.matrixL();
    const Matrix LtX = L.transpose() * X;
    const Matrix C = LtX * w.asDiagonal() * LtX.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (C + C.transpose()));
    if (eig.info() != Eigen::Success) throw NumericalError("KL covariance eigendecomposition failed");
    lam = eig.eigenvalues().reverse();
    const Matrix V = eig.eigenvectors().rowwise().reverse();
    Index r = 0;
    while (r < lam.size() && lam[r] > 1e-14 * lam[0] && lam[r] > 0.0) ++r;
    kl.discarded = lam.tail(lam.size() - r).sum();
    lam.conservativeResize(r);
    psi = L.transpose().triangularView<Eigen::Upper>().solve(V.leftCols(r));
    xi = X.transpose() * mass * psi * lam.cwiseSqrt().cwiseInverse().asDiagonal();
  }
  if (lam.size() == 0 || kl.total_variance == 0.0) {
    kl.modes.resize(n, 0);
    kl.factors.resize(M, 0);
    kl.eigenvalues.resize(0);
    return kl;
  }
  for (Index j = 0; j < psi.cols(); ++j) {
    const double big = psi.col(j).cwiseAbs().maxCoeff();
    for (Index i = 0; i < n; ++i) {
      if (std::abs(psi(i, j)) > 1e-12 * big) {
        if (psi(i, j) < 0.0) {
          psi.col(j) = -psi.col(j);
          xi.col(j) = -xi.col(j);
        }
        break;
      }
    }
  }
  kl.modes = std::move(psi);
  kl.factors = std::move(xi);
  kl.eigenvalues = std::move(lam);
  return kl;
}

Metric e_kl(const KlDecomposition& kl, const Ensemble& ens, Index k) {
  if (kl.total_variance < 1e-28) return Metric::undefined("ensemble is deterministic; the relative error has no denominator");
  if (k < 0) throw ConfigError("KL truncation rank must be non-negative");
  const Index kk = std::min(k, kl.rank());
  const Vector& w = ens.samples->weights;
  const Matrix X = ens.values.colwise() - kl.mean;
  const Matrix R = X - kl.modes.leftCols(kk) * kl.eigenvalues.head(kk).cwiseSqrt().asDiagonal() *
                           kl.factors.leftCols(kk).transpose();
  const double num = space_time_norm2(ens.mesh->interior_mass_matrix(), R, w);
  return {true, std::sqrt(std::max(num, 0.0) / kl.total_variance), {}};
}

KlMatch e_kl_match(const Ensemble& ens, double k_match) {
  if (!(k_match >= 0.0)) throw ConfigError("k_match must be non-negative");
  const KlDecomposition kl = kl_expand(ens);
  KlMatch out;
  out.k_match = k_match;
  out.k_floor = static_cast<Index>(std::floor(k_match));
  out.k_ceil = static_cast<Index>(std::ceil(k_match));
  out.floor = e_kl(kl, ens, out.k_floor);
  out.ceil = out.k_ceil == out.k_floor ? out.floor : e_kl(kl, ens, out.k_ceil);
  return out;
}

Metric e_kl(const Ensemble& ens, double k_match) { return e_kl_match(ens, k_match).floor; }

}  // namespace hsfem
