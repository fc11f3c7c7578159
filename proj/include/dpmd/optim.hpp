#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "dpmd/core.hpp"
#include "dpmd/dp.hpp"
#include "dpmd/mirror.hpp"

namespace dpmd {

enum class IteratePolicy { kFinal, kAverage, kBestOnHoldout };

struct OptimizerConfig {
  std::function<double(int)> learning_rate = [](int) { return 0.1; };  // eta_t
  int steps = 0;  // T; 0 returns theta0 with empty traces
  // Cosine-schedule horizon K for the first-order variant. 0 is the
  // K -> infinity sentinel (alpha_t == 1 for every step); negative values
  // force alpha_t == 0 (pure public descent, noise stream untouched).
  int alpha_horizon = 0;
  IteratePolicy policy = IteratePolicy::kFinal;
  int batch_size = 0;  // 0 => full batch
  std::optional<double> projection_radius;  // l2-ball projection when set
  int eval_stride = 1;  // loss recorded every stride steps; 0 disables traces
  bool record_trajectory = false;  // keep all post-step iterates (tests)
  const RegressionDataset* holdout = nullptr;  // required by kBestOnHoldout
};

inline std::function<double(int)> constant_lr(double eta) {
  return [eta](int) { return eta; };
}

struct RunResult {
  Vector theta;
  std::vector<double> private_losses;  // at theta_t before step t, stride-sampled
  std::vector<double> public_losses;   // same points; empty without public data
  std::vector<Vector> trajectory;      // post-step iterates, if recorded
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

// alpha_t = cos(pi t / (2K)) for t < K, clamped to 0 for t >= K.
double alpha_schedule(int t, int horizon);

// Minimizer of the gamma-ridged public loss (pre-training step).
Vector warm_start(const RegressionDataset& pub_data, double gamma);

// Gradient descent with Armijo backtracking for a general loss callable;
// runs until ||grad|| <= tol or throws after max_iters iterations.
Vector warm_start_general(const std::function<double(const Vector&)>& loss,
                          const std::function<Vector(const Vector&)>& gradient,
                          Vector theta0, int max_iters, double tol = 1e-6);

// DP-SGD: theta <- Pi(theta - eta_t (g_t + b_t)) with clipped averaged
// gradients and Gaussian noise.
RunResult dp_sgd(const RegressionDataset& priv_data, const Vector& theta0,
                 const PrivacyConfig& pcfg, const OptimizerConfig& ocfg,
                 RngStream rng);

// Exact mirror step for a quadratic mirror map:
// theta <- theta - eta_t H~^{-1} (g_t + b_t).
RunResult pda_dpmd_exact(const RegressionDataset& priv_data,
                         const QuadraticMirrorMap& map, const Vector& theta0,
                         const PrivacyConfig& pcfg, const OptimizerConfig& ocfg,
                         RngStream rng);

// First-order approximation:
// theta <- theta - eta_t (alpha_t (g_t + b_t) + (1 - alpha_t) grad Psi(theta)).
// With alpha_t == 0 the private data and noise stream are untouched.
RunResult pda_dpmd_first_order(const RegressionDataset& priv_data,
                               const RegressionDataset& pub_data,
                               const Vector& theta0, const PrivacyConfig& pcfg,
                               const OptimizerConfig& ocfg, RngStream rng);

}  // namespace dpmd
