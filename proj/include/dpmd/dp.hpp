#pragma once

#include "dpmd/core.hpp"

namespace dpmd {

enum class SigmaMode {
  kCalibrated,  // sigma derived from (epsilon, delta, L, T, n)
  kExternal,    // sigma supplied directly; the reported epsilon is external
};

struct PrivacyConfig {
  double epsilon = 1.0;
  double delta = 1e-5;
  double clip_norm = 1.0;  // L
  int steps = 1;           // T
  int n_private = 1;
  double sigma = 0.0;
  SigmaMode sigma_mode = SigmaMode::kCalibrated;
  // Clip the noiseless average gradient to L before adding noise
  // (used by image-task style configs; off by default).
  bool post_average_clip = false;

  static PrivacyConfig calibrated(double epsilon, double delta, double clip_norm,
                                  int steps, int n_private);
  static PrivacyConfig external(double sigma, double clip_norm, int steps,
                                int n_private);
};

// sigma = sqrt(8 L^2 T ln(1/delta)) / (epsilon n_private). Natural log.
double calibrate_sigma(double clip_norm, int steps, double epsilon, double delta,
                       int n_private);

// v * min{1, L / ||v||_2}; the zero vector maps to itself.
Vector clip(const Vector& v, double clip_norm);

// p i.i.d. N(0, sigma^2) draws. sigma == 0 returns zeros without consuming
// the stream.
Vector gaussian_noise(Eigen::Index p, double sigma, RngStream& rng);

// (1/n) sum_i clip(grad ell(theta; d_i), L), no noise. Vectorized for the
// built-in regression family.
Vector clipped_mean_gradient(const Vector& theta, const RowMatrix& features,
                             const Vector& responses, double clip_norm,
                             const Vector& row_norms);
Vector clipped_mean_gradient(const Vector& theta, const RegressionDataset& data,
                             double clip_norm);

// Clipped mean gradient plus N(0, sigma^2 I) noise. With post_average_clip
// set, the noiseless average is clipped to L before noise is added.
Vector privatized_gradient(const Vector& theta, const RegressionDataset& data,
                           const PrivacyConfig& cfg, RngStream& rng);

// Same mechanism for an arbitrary per-sample loss family.
Vector privatized_gradient(const Vector& theta, const RegressionDataset& data,
                           const PrivacyConfig& cfg, RngStream& rng,
                           const LossModel& model);

}  // namespace dpmd
