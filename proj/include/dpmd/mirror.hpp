#pragma once

#include <utility>

#include "dpmd/core.hpp"

namespace dpmd {

// Quadratic mirror map Psi(theta) = 1/2 theta^T H~ theta built from a public
// Hessian: H~ = (H + gamma I) / lambda_min(H + gamma I), so lambda_min(H~) = 1
// and the inverse applied to gradients has maximum eigenvalue one. Immutable
// after construction; safe to share across threads.
class QuadraticMirrorMap {
 public:
  Eigen::Index dim() const { return eigenvalues_.size(); }
  double ridge() const { return ridge_; }
  double normalizer() const { return normalizer_; }

  const Matrix& matrix() const { return h_tilde_; }
  // Ascending eigenvalues of H~; eigenvectors_ columns are orthonormal.
  const Vector& eigenvalues() const { return eigenvalues_; }
  const Matrix& eigenvectors() const { return eigenvectors_; }

  Vector apply(const Vector& v) const;          // H~ v
  Vector inverse_apply(const Vector& v) const;  // H~^{-1} v via the eigenbasis

  // B_Psi(a, b) = 1/2 (a-b)^T H~ (a-b)
  double bregman(const Vector& a, const Vector& b) const;

 private:
  friend QuadraticMirrorMap regularize_normalize(const Matrix& hessian, double gamma);
  Matrix h_tilde_;
  Matrix eigenvectors_;
  Vector eigenvalues_;
  double ridge_ = 0.0;
  double normalizer_ = 1.0;
};

// (1/n_pub) X^T X, the Hessian of the mean public loss.
Matrix build_public_hessian(const RegressionDataset& pub_data);

// Default ridge: 1e-6 * trace(H) / p (mean eigenvalue scaled).
double default_ridge(const Matrix& hessian);

// Ridge then normalize by the smallest eigenvalue; eigendecomposition is
// computed eagerly and cached. Throws if H + gamma I is not positive definite.
QuadraticMirrorMap regularize_normalize(const Matrix& hessian, double gamma);

// Minimizer of the gamma-ridged public mean loss:
// (X^T X / n + gamma I) theta = X^T y / n. Throws on a singular system.
Vector public_optimum(const RegressionDataset& pub_data, double gamma);

// Monte-Carlo Gaussian width of the axis-aligned ellipsoid with the given
// radii: E_g sqrt(sum_i (r_i g_i)^2), g ~ N(0, I).
double gaussian_width_mc(const Vector& radii, int samples, RngStream& rng);

// Extreme eigenvalues of Hbar^{-1/2} Hhat Hbar^{-1/2} restricted to the range
// of Hbar (pseudo-inverse square root when Hbar is singular). Used as the
// spectral-sandwich concentration diagnostic 1/2 Hbar <= Hhat <= 2 Hbar.
// Directions where Hbar vanishes are checked to carry no Hhat energy beyond
// null_tol; otherwise the sandwich cannot hold and (0, +inf) is returned.
std::pair<double, double> spectral_sandwich_range(const Matrix& h_hat,
                                                  const Matrix& h_bar,
                                                  double rank_tol = 1e-10,
                                                  double null_tol = 1e-8);

}  // namespace dpmd
