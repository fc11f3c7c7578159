#include "dpmd/dp.hpp"

#include <cmath>
#include <stdexcept>

namespace dpmd {

PrivacyConfig PrivacyConfig::calibrated(double epsilon, double delta,
                                        double clip_norm, int steps,
                                        int n_private) {
  PrivacyConfig cfg;
  cfg.epsilon = epsilon;
  cfg.delta = delta;
  cfg.clip_norm = clip_norm;
  cfg.steps = steps;
  cfg.n_private = n_private;
  cfg.sigma = calibrate_sigma(clip_norm, steps, epsilon, delta, n_private);
  cfg.sigma_mode = SigmaMode::kCalibrated;
  return cfg;
}

PrivacyConfig PrivacyConfig::external(double sigma, double clip_norm, int steps,
                                      int n_private) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("external sigma must be finite and >= 0");
  }
  PrivacyConfig cfg;
  cfg.epsilon = 0.0;  // externally supplied; not derived here
  cfg.clip_norm = clip_norm;
  cfg.steps = steps;
  cfg.n_private = n_private;
  cfg.sigma = sigma;
  cfg.sigma_mode = SigmaMode::kExternal;
  return cfg;
}

double calibrate_sigma(double clip_norm, int steps, double epsilon, double delta,
                       int n_private) {
  const bool ok = std::isfinite(clip_norm) && clip_norm > 0.0 && steps > 0 &&
                  std::isfinite(epsilon) && epsilon > 0.0 &&
                  std::isfinite(delta) && delta > 0.0 && delta < 1.0 &&
                  n_private > 0;
  if (!ok) {
    throw std::invalid_argument("calibrate_sigma: arguments must be positive, finite, delta < 1");
  }
  return std::sqrt(8.0 * clip_norm * clip_norm * static_cast<double>(steps) *
                   std::log(1.0 / delta)) /
         (epsilon * static_cast<double>(n_private));
}

Vector clip(const Vector& v, double clip_norm) {
  if (!(clip_norm > 0.0)) {
    throw std::invalid_argument("clip: clip norm must be positive");
  }
  const double norm = v.norm();
  if (norm <= clip_norm) return v;
  return v * (clip_norm / norm);
}

Vector gaussian_noise(Eigen::Index p, double sigma, RngStream& rng) {
  if (p < 1) throw std::invalid_argument("gaussian_noise: p must be >= 1");
  if (sigma < 0.0) throw std::invalid_argument("gaussian_noise: sigma must be >= 0");
  if (sigma == 0.0) return Vector::Zero(p);
  return rng.normal_vector(p, sigma);
}

Vector clipped_mean_gradient(const Vector& theta, const RowMatrix& features,
                             const Vector& responses, double clip_norm,
                             const Vector& row_norms) {
  const Eigen::Index n = features.rows();
  const Eigen::Index p = features.cols();
  if (theta.size() != p) {
    throw std::invalid_argument("clipped_mean_gradient: dimension mismatch");
  }
  if (n < 1) throw std::invalid_argument("clipped_mean_gradient: empty dataset");
  // Per-sample gradient is -(y_i - <x_i, theta>) x_i with norm |r_i| ||x_i||,
  // so clipping reduces to a per-sample scale on the residual. One streaming
  // pass over the rows computes the residual and accumulates the average.
  Vector acc = Vector::Zero(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = features.row(i);
    const double r = responses[i] - row.dot(theta);
    const double grad_norm = std::abs(r) * row_norms[i];
    double w = -r;
    if (grad_norm > clip_norm) w *= clip_norm / grad_norm;
    acc += w * row.transpose();
  }
  return acc / static_cast<double>(n);
}

Vector clipped_mean_gradient(const Vector& theta, const RegressionDataset& data,
                             double clip_norm) {
  const Vector norms = row_l2_norms(data.features);
  return clipped_mean_gradient(theta, data.features, data.responses, clip_norm, norms);
}

Vector privatized_gradient(const Vector& theta, const RegressionDataset& data,
                           const PrivacyConfig& cfg, RngStream& rng) {
  data.validate();
  Vector g = clipped_mean_gradient(theta, data, cfg.clip_norm);
  if (cfg.post_average_clip) g = clip(g, cfg.clip_norm);
  if (cfg.sigma > 0.0) g += gaussian_noise(theta.size(), cfg.sigma, rng);
  return g;
}

Vector privatized_gradient(const Vector& theta, const RegressionDataset& data,
                           const PrivacyConfig& cfg, RngStream& rng,
                           const LossModel& model) {
  data.validate();
  const Eigen::Index n = data.n();
  Vector acc = Vector::Zero(theta.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = data.features.row(i).transpose();
    acc += clip(model.gradient(theta, x, data.responses[i]), cfg.clip_norm);
  }
  Vector g = acc / static_cast<double>(n);
  if (cfg.post_average_clip) g = clip(g, cfg.clip_norm);
  if (cfg.sigma > 0.0) g += gaussian_noise(theta.size(), cfg.sigma, rng);
  return g;
}

}  // namespace dpmd
