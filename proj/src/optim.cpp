#include "dpmd/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dpmd {

namespace {

constexpr std::uint64_t kPrivateBatchStream = 0x70726976;  // private minibatches
constexpr std::uint64_t kPublicBatchStream = 0x707562;     // public minibatches

enum class Method { kSgd, kMirrorExact, kFirstOrder };

// Without-replacement minibatch order, reshuffled each epoch.
class BatchCursor {
 public:
  BatchCursor(int n, int batch_size, RngStream rng)
      : batch_size_(batch_size), rng_(std::move(rng)), order_(n) {
    for (int i = 0; i < n; ++i) order_[i] = i;
    pos_ = n;  // forces a shuffle before the first batch
  }

  const std::vector<int>& next() {
    batch_.clear();
    for (int k = 0; k < batch_size_; ++k) {
      if (pos_ == static_cast<int>(order_.size())) {
        rng_.shuffle(order_);
        pos_ = 0;
      }
      batch_.push_back(order_[pos_++]);
    }
    return batch_;
  }

 private:
  int batch_size_;
  int pos_ = 0;
  RngStream rng_;
  std::vector<int> order_;
  std::vector<int> batch_;
};

struct BatchView {
  RowMatrix features;
  Vector responses;
  Vector row_norms;

  void gather(const RegressionDataset& data, const Vector& all_norms,
              const std::vector<int>& idx) {
    const auto b = static_cast<Eigen::Index>(idx.size());
    features.resize(b, data.dim());
    responses.resize(b);
    row_norms.resize(b);
    for (Eigen::Index k = 0; k < b; ++k) {
      features.row(k) = data.features.row(idx[k]);
      responses[k] = data.responses[idx[k]];
      row_norms[k] = all_norms[idx[k]];
    }
  }
};

RunResult run_dp_optimizer(Method method, const RegressionDataset& priv_data,
                           const RegressionDataset* pub_data,
                           const QuadraticMirrorMap* map, const Vector& theta0,
                           const PrivacyConfig& pcfg, const OptimizerConfig& ocfg,
                           RngStream& rng) {
  priv_data.validate();
  if (priv_data.visibility != Visibility::kPrivate) {
    throw std::invalid_argument("optimizer: training data must be private");
  }
  const Eigen::Index p = priv_data.dim();
  if (theta0.size() != p) throw std::invalid_argument("optimizer: theta0 dimension mismatch");
  if (map != nullptr && map->dim() != p) {
    throw std::invalid_argument("optimizer: mirror map dimension mismatch");
  }
  if (pub_data != nullptr) pub_data->validate();
  if (ocfg.policy == IteratePolicy::kBestOnHoldout && ocfg.holdout == nullptr) {
    throw std::invalid_argument("optimizer: best_on_holdout requires a holdout set");
  }
  if (ocfg.projection_radius && !(*ocfg.projection_radius > 0.0)) {
    throw std::invalid_argument("optimizer: projection radius must be positive");
  }
  check_finite(theta0, "theta0");

  RunResult result;
  result.sigma = pcfg.sigma;
  result.seed = rng.seed();
  result.stream_id = rng.stream_id();
  result.theta = theta0;
  if (ocfg.steps <= 0) return result;

  const int T = ocfg.steps;
  const Vector priv_norms = row_l2_norms(priv_data.features);
  const bool minibatch = ocfg.batch_size > 0 && ocfg.batch_size < priv_data.n();

  BatchCursor priv_cursor(static_cast<int>(priv_data.n()), ocfg.batch_size,
                          rng.derive(kPrivateBatchStream));
  BatchCursor pub_cursor(pub_data ? static_cast<int>(pub_data->n()) : 1,
                         ocfg.batch_size, rng.derive(kPublicBatchStream));
  const bool pub_minibatch = pub_data != nullptr && ocfg.batch_size > 0 &&
                             ocfg.batch_size < pub_data->n();
  BatchView scratch;

  Vector theta = theta0;
  Vector average = Vector::Zero(p);
  Vector best_theta = theta0;
  double best_holdout = ocfg.policy == IteratePolicy::kBestOnHoldout
                            ? mean_squared_error(theta0, *ocfg.holdout)
                            : 0.0;

  auto private_gradient = [&](const Vector& at) -> Vector {
    if (!minibatch) {
      Vector g = clipped_mean_gradient(at, priv_data.features, priv_data.responses,
                                       pcfg.clip_norm, priv_norms);
      if (pcfg.post_average_clip) g = clip(g, pcfg.clip_norm);
      if (pcfg.sigma > 0.0) g += gaussian_noise(p, pcfg.sigma, rng);
      return g;
    }
    scratch.gather(priv_data, priv_norms, priv_cursor.next());
    Vector g = clipped_mean_gradient(at, scratch.features, scratch.responses,
                                     pcfg.clip_norm, scratch.row_norms);
    if (pcfg.post_average_clip) g = clip(g, pcfg.clip_norm);
    if (pcfg.sigma > 0.0) g += gaussian_noise(p, pcfg.sigma, rng);
    return g;
  };

  auto public_gradient = [&](const Vector& at) -> Vector {
    if (!pub_minibatch) {
      const Vector r = pub_data->responses - pub_data->features * at;
      return -(pub_data->features.transpose() * r) / static_cast<double>(pub_data->n());
    }
    const std::vector<int>& idx = pub_cursor.next();
    Vector g = Vector::Zero(p);
    for (int i : idx) {
      const auto row = pub_data->features.row(i);
      g -= (pub_data->responses[i] - row.dot(at)) * row.transpose();
    }
    return g / static_cast<double>(idx.size());
  };

  for (int t = 0; t < T; ++t) {
    if (ocfg.eval_stride > 0 && t % ocfg.eval_stride == 0) {
      result.private_losses.push_back(batch_loss(theta, priv_data));
      if (pub_data != nullptr) result.public_losses.push_back(batch_loss(theta, *pub_data));
    }

    const double eta = ocfg.learning_rate(t);
    Vector direction;
    switch (method) {
      case Method::kSgd:
        direction = private_gradient(theta);
        break;
      case Method::kMirrorExact:
        direction = map->inverse_apply(private_gradient(theta));
        break;
      case Method::kFirstOrder: {
        const double alpha = ocfg.alpha_horizon == 0
                                 ? 1.0
                                 : (ocfg.alpha_horizon < 0
                                        ? 0.0
                                        : alpha_schedule(t, ocfg.alpha_horizon));
        if (alpha > 0.0) {
          direction = alpha * private_gradient(theta);
          if (alpha < 1.0) direction += (1.0 - alpha) * public_gradient(theta);
        } else {
          direction = public_gradient(theta);
        }
        break;
      }
    }

    theta -= eta * direction;
    if (ocfg.projection_radius) theta = clip(theta, *ocfg.projection_radius);
    check_finite(theta);

    average += theta;
    if (ocfg.record_trajectory) result.trajectory.push_back(theta);
    if (ocfg.policy == IteratePolicy::kBestOnHoldout &&
        (ocfg.eval_stride > 0 ? (t % ocfg.eval_stride == 0) : (t == T - 1))) {
      const double h = mean_squared_error(theta, *ocfg.holdout);
      if (h < best_holdout) {
        best_holdout = h;
        best_theta = theta;
      }
    }
  }

  switch (ocfg.policy) {
    case IteratePolicy::kFinal:
      result.theta = theta;
      break;
    case IteratePolicy::kAverage:
      result.theta = average / static_cast<double>(T);
      break;
    case IteratePolicy::kBestOnHoldout:
      result.theta = best_theta;
      break;
  }
  return result;
}

}  // namespace

double alpha_schedule(int t, int horizon) {
  if (t < 0 || horizon < 1) {
    throw std::invalid_argument("alpha_schedule: requires t >= 0 and K >= 1");
  }
  if (t >= horizon) return 0.0;
  return std::cos(std::numbers::pi * static_cast<double>(t) /
                  (2.0 * static_cast<double>(horizon)));
}

Vector warm_start(const RegressionDataset& pub_data, double gamma) {
  return public_optimum(pub_data, gamma);
}

Vector warm_start_general(const std::function<double(const Vector&)>& loss,
                          const std::function<Vector(const Vector&)>& gradient,
                          Vector theta0, int max_iters, double tol) {
  Vector theta = std::move(theta0);
  double eta = 1.0;
  for (int it = 0; it < max_iters; ++it) {
    const Vector g = gradient(theta);
    const double gnorm = g.norm();
    if (gnorm <= tol) return theta;
    const double base = loss(theta);
    // Armijo backtracking, with a mild growth so a too-small step recovers.
    eta *= 2.0;
    Vector candidate = theta - eta * g;
    while (loss(candidate) > base - 0.5 * eta * gnorm * gnorm) {
      eta /= 2.0;
      if (eta < 1e-18) throw std::runtime_error("warm_start_general: line search failed");
      candidate = theta - eta * g;
    }
    theta = std::move(candidate);
  }
  throw std::runtime_error("warm_start_general: no convergence within iteration budget");
}

RunResult dp_sgd(const RegressionDataset& priv_data, const Vector& theta0,
                 const PrivacyConfig& pcfg, const OptimizerConfig& ocfg,
                 RngStream rng) {
  return run_dp_optimizer(Method::kSgd, priv_data, nullptr, nullptr, theta0, pcfg,
                          ocfg, rng);
}

RunResult pda_dpmd_exact(const RegressionDataset& priv_data,
                         const QuadraticMirrorMap& map, const Vector& theta0,
                         const PrivacyConfig& pcfg, const OptimizerConfig& ocfg,
                         RngStream rng) {
  return run_dp_optimizer(Method::kMirrorExact, priv_data, nullptr, &map, theta0,
                          pcfg, ocfg, rng);
}

RunResult pda_dpmd_first_order(const RegressionDataset& priv_data,
                               const RegressionDataset& pub_data,
                               const Vector& theta0, const PrivacyConfig& pcfg,
                               const OptimizerConfig& ocfg, RngStream rng) {
  return run_dp_optimizer(Method::kFirstOrder, priv_data, &pub_data, nullptr,
                          theta0, pcfg, ocfg, rng);
}

}  // namespace dpmd
