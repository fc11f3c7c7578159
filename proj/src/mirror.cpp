#include "dpmd/mirror.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace dpmd {

Vector QuadraticMirrorMap::apply(const Vector& v) const {
  if (v.size() != dim()) throw std::invalid_argument("mirror apply: dimension mismatch");
  return h_tilde_ * v;
}

Vector QuadraticMirrorMap::inverse_apply(const Vector& v) const {
  if (v.size() != dim()) throw std::invalid_argument("inverse_apply: dimension mismatch");
  return eigenvectors_ * (eigenvectors_.transpose() * v).cwiseQuotient(eigenvalues_);
}

double QuadraticMirrorMap::bregman(const Vector& a, const Vector& b) const {
  if (a.size() != dim() || b.size() != dim()) {
    throw std::invalid_argument("bregman: dimension mismatch");
  }
  const Vector d = a - b;
  return 0.5 * d.dot(h_tilde_ * d);
}

Matrix build_public_hessian(const RegressionDataset& pub_data) {
  pub_data.validate();
  const double n = static_cast<double>(pub_data.n());
  Matrix h = pub_data.features.transpose() * pub_data.features / n;
  // Symmetrize away round-off so downstream eigensolves see an exact symmetric matrix.
  return (h + h.transpose()) / 2.0;
}

double default_ridge(const Matrix& hessian) {
  return 1e-6 * hessian.trace() / static_cast<double>(hessian.rows());
}

QuadraticMirrorMap regularize_normalize(const Matrix& hessian, double gamma) {
  if (hessian.rows() != hessian.cols()) {
    throw std::invalid_argument("regularize_normalize: matrix must be square");
  }
  if (!hessian.isApprox(hessian.transpose(), 1e-10)) {
    throw std::invalid_argument("regularize_normalize: matrix must be symmetric");
  }
  if (gamma < 0.0) throw std::invalid_argument("regularize_normalize: gamma must be >= 0");

  const Eigen::Index p = hessian.rows();
  Matrix ridged = hessian;
  ridged.diagonal().array() += gamma;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(ridged);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("regularize_normalize: eigendecomposition failed");
  }
  const Vector& lambda = eig.eigenvalues();  // ascending
  const double lambda_min = lambda[0];
  const double lambda_max = lambda[p - 1];
  if (!(lambda_min > 0.0) || lambda_min <= 1e-14 * std::max(1.0, lambda_max)) {
    throw std::runtime_error("regularize_normalize: H + gamma I is not positive definite");
  }

  QuadraticMirrorMap map;
  map.h_tilde_ = ridged / lambda_min;
  map.eigenvectors_ = eig.eigenvectors();
  map.eigenvalues_ = lambda / lambda_min;
  map.ridge_ = gamma;
  map.normalizer_ = lambda_min;
  return map;
}

Vector public_optimum(const RegressionDataset& pub_data, double gamma) {
  pub_data.validate();
  const double n = static_cast<double>(pub_data.n());
  Matrix a = build_public_hessian(pub_data);
  a.diagonal().array() += gamma;
  const Vector b = pub_data.features.transpose() * pub_data.responses / n;

  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("public_optimum: singular system (increase gamma)");
  }
  const Vector theta = llt.solve(b);
  // Stationarity of the ridged public loss is the contract; a failed residual
  // indicates a numerically singular system that LLT did not flag.
  const double grad_norm = (a * theta - b).norm();
  const double tol = 1e-6 * std::max(1.0, pub_data.responses.norm());
  if (!(grad_norm <= tol)) {
    throw std::runtime_error("public_optimum: singular or ill-conditioned system");
  }
  return theta;
}

double gaussian_width_mc(const Vector& radii, int samples, RngStream& rng) {
  if (samples < 1) throw std::invalid_argument("gaussian_width_mc: samples must be >= 1");
  const Eigen::Index p = radii.size();
  double acc = 0.0;
  for (int s = 0; s < samples; ++s) {
    double sq = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) {
      const double t = radii[i] * rng.normal();
      sq += t * t;
    }
    acc += std::sqrt(sq);
  }
  return acc / static_cast<double>(samples);
}

std::pair<double, double> spectral_sandwich_range(const Matrix& h_hat,
                                                  const Matrix& h_bar,
                                                  double rank_tol,
                                                  double null_tol) {
  if (h_hat.rows() != h_bar.rows() || h_hat.cols() != h_bar.cols()) {
    throw std::invalid_argument("spectral_sandwich_range: dimension mismatch");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h_bar);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("spectral_sandwich_range: eigendecomposition failed");
  }
  const Vector& w = eig.eigenvalues();
  const Eigen::Index p = w.size();
  const double cutoff = rank_tol * std::max(w[p - 1], 0.0);

  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (w[i] > cutoff) ++rank;
  }
  if (rank == 0) throw std::runtime_error("spectral_sandwich_range: reference matrix is zero");
  const Eigen::Index null_dim = p - rank;

  // Columns are ascending, so the top `rank` columns span the range.
  const Matrix range_basis = eig.eigenvectors().rightCols(rank);
  const Vector range_eigs = w.tail(rank);

  if (null_dim > 0) {
    const Matrix null_basis = eig.eigenvectors().leftCols(null_dim);
    const double null_energy =
        (null_basis.transpose() * h_hat * null_basis).cwiseAbs().maxCoeff();
    if (null_energy > null_tol * std::max(1.0, h_hat.cwiseAbs().maxCoeff())) {
      return {0.0, std::numeric_limits<double>::infinity()};
    }
  }

  const Matrix s = range_basis * range_eigs.cwiseSqrt().cwiseInverse().asDiagonal();
  Matrix m = s.transpose() * h_hat * s;
  m = (m + m.transpose()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Matrix> sandwich(m, Eigen::EigenvaluesOnly);
  const Vector& sw = sandwich.eigenvalues();
  return {sw[0], sw[sw.size() - 1]};
}

}  // namespace dpmd
