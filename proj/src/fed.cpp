#include "dpmd/fed.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dpmd/dp.hpp"
#include "dpmd/optim.hpp"

namespace dpmd {

namespace {

constexpr std::uint64_t kLocalStream = 0x6c6f63616cULL;

Vector noisy_private_aggregate(const Vector& theta, const ClientPopulation& pop,
                               const FedConfig& cfg, int round_t, RngStream& rng) {
  const int n_clients = static_cast<int>(pop.private_clients.size());
  const int m = cfg.clients_per_round;
  if (m < 1 || m > n_clients) {
    throw std::invalid_argument("fed round: clients_per_round out of range");
  }
  std::vector<int> sampled = rng.sample_without_replacement(n_clients, m);
  std::sort(sampled.begin(), sampled.end());  // order independent of sampling path

  Vector sum = Vector::Zero(theta.size());
  for (int client : sampled) {
    RngStream local_rng = rng.derive(
        mix_seed({kLocalStream, static_cast<std::uint64_t>(round_t),
                  static_cast<std::uint64_t>(client)}));
    const Vector delta =
        local_update(theta, pop.private_clients[client], cfg.local_steps,
                     cfg.client_lr, cfg.local_batch_size, local_rng);
    sum += clip(delta, cfg.clip_norm);
  }
  Vector avg = sum / static_cast<double>(m);
  const double noise_sd = cfg.sigma * cfg.clip_norm / static_cast<double>(m);
  if (noise_sd > 0.0) avg += gaussian_noise(theta.size(), noise_sd, rng);
  return avg;
}

Vector public_full_gradient(const Vector& theta, const RegressionDataset& pub) {
  const Vector r = pub.responses - pub.features * theta;
  return -(pub.features.transpose() * r) / static_cast<double>(pub.n());
}

}  // namespace

Eigen::Index ClientPopulation::dim() const {
  if (!private_clients.empty()) return private_clients.front().dim();
  if (!public_clients.empty()) return public_clients.front().dim();
  return 0;
}

ClientPopulation partition_clients(const RegressionDataset& data, int n_clients,
                                   int n_public_clients, int cap, RngStream& rng) {
  data.validate();
  const int n = static_cast<int>(data.n());
  if (n_clients < 1 || n_public_clients < 0 || n_public_clients > n_clients) {
    throw std::invalid_argument("partition_clients: bad client counts");
  }
  if (n < n_clients) {
    throw std::invalid_argument("partition_clients: infeasible partition (empty client)");
  }
  const int base = n / n_clients;
  const int remainder = n % n_clients;
  if (base + (remainder > 0 ? 1 : 0) > cap) {
    throw std::invalid_argument("partition_clients: infeasible partition (cap exceeded)");
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);

  ClientPopulation pop;
  pop.max_examples_per_client = cap;
  int offset = 0;
  int n_public_examples = 0;
  for (int c = 0; c < n_clients; ++c) {
    const int size = base + (c < remainder ? 1 : 0);
    RegressionDataset shard;
    shard.features.resize(size, data.dim());
    shard.responses.resize(size);
    shard.visibility = c < n_public_clients ? Visibility::kPublic : Visibility::kPrivate;
    for (int k = 0; k < size; ++k) {
      shard.features.row(k) = data.features.row(order[offset + k]);
      shard.responses[k] = data.responses[order[offset + k]];
    }
    offset += size;
    if (c < n_public_clients) {
      n_public_examples += size;
      pop.public_clients.push_back(std::move(shard));
    } else {
      pop.private_clients.push_back(std::move(shard));
    }
  }

  if (n_public_examples > 0) {
    pop.public_union.features.resize(n_public_examples, data.dim());
    pop.public_union.responses.resize(n_public_examples);
    pop.public_union.visibility = Visibility::kPublic;
    int row = 0;
    for (const RegressionDataset& shard : pop.public_clients) {
      pop.public_union.features.middleRows(row, shard.n()) = shard.features;
      pop.public_union.responses.segment(row, shard.n()) = shard.responses;
      row += static_cast<int>(shard.n());
    }
  }
  return pop;
}

Vector local_update(const Vector& theta, const RegressionDataset& shard,
                    int local_steps, double client_lr, int batch_size,
                    RngStream& rng) {
  shard.validate();
  if (theta.size() != shard.dim()) {
    throw std::invalid_argument("local_update: dimension mismatch");
  }
  const int n = static_cast<int>(shard.n());
  const bool full_batch = batch_size <= 0 || batch_size >= n;

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  int pos = n;

  Vector local = theta;
  for (int step = 0; step < local_steps; ++step) {
    Vector g = Vector::Zero(theta.size());
    if (full_batch) {
      const Vector r = shard.responses - shard.features * local;
      g = -(shard.features.transpose() * r) / static_cast<double>(n);
    } else {
      for (int k = 0; k < batch_size; ++k) {
        if (pos == n) {
          rng.shuffle(order);
          pos = 0;
        }
        const int i = order[pos++];
        const auto row = shard.features.row(i);
        g -= (shard.responses[i] - row.dot(local)) * row.transpose();
      }
      g /= static_cast<double>(batch_size);
    }
    local -= client_lr * g;
    check_finite(local, "local iterate");
  }
  return local - theta;
}

Vector dp_fedavg_round(const Vector& theta, const ClientPopulation& population,
                       const FedConfig& cfg, int round_t, RngStream& rng) {
  const Vector delta = noisy_private_aggregate(theta, population, cfg, round_t, rng);
  Vector next = theta + cfg.server_lr(round_t) * delta;
  check_finite(next);
  return next;
}

Vector pda_dpmd_fed_round(const Vector& theta, const ClientPopulation& population,
                          const FedConfig& cfg, int round_t, RngStream& rng) {
  const double alpha =
      cfg.alpha_horizon <= 0 ? 1.0 : alpha_schedule(round_t, cfg.alpha_horizon);
  Vector direction;
  if (alpha > 0.0) {
    direction = alpha * noisy_private_aggregate(theta, population, cfg, round_t, rng);
  } else {
    direction = Vector::Zero(theta.size());
  }
  if (alpha < 1.0) {
    if (population.public_union.n() == 0) {
      throw std::invalid_argument("pda_dpmd_fed_round: no public clients but alpha < 1");
    }
    direction -= (1.0 - alpha) * public_full_gradient(theta, population.public_union);
  }
  Vector next = theta + cfg.server_lr(round_t) * direction;
  check_finite(next);
  return next;
}

double population_private_loss(const Vector& theta, const ClientPopulation& population) {
  double sum = 0.0;
  double count = 0.0;
  for (const RegressionDataset& shard : population.private_clients) {
    const Vector r = shard.responses - shard.features * theta;
    sum += 0.5 * r.squaredNorm();
    count += static_cast<double>(shard.n());
  }
  if (count == 0.0) throw std::invalid_argument("population has no private examples");
  return sum / count;
}

FedRunResult run_fed_simulation(const ClientPopulation& population,
                                const FedConfig& cfg, FedAlgorithm algorithm,
                                const Vector& theta0,
                                const RegressionDataset& eval_data,
                                RngStream& rng) {
  FedRunResult result;
  result.theta = theta0;
  result.rounds.reserve(cfg.rounds);
  for (int t = 0; t < cfg.rounds; ++t) {
    result.theta = algorithm == FedAlgorithm::kDpFedAvg
                       ? dp_fedavg_round(result.theta, population, cfg, t, rng)
                       : pda_dpmd_fed_round(result.theta, population, cfg, t, rng);
    FedRoundRecord rec;
    rec.round = t;
    rec.train_loss = population_private_loss(result.theta, population);
    rec.eval_loss = mean_squared_error(result.theta, eval_data);
    rec.alpha = algorithm == FedAlgorithm::kPdaDpmdFed && cfg.alpha_horizon > 0
                    ? alpha_schedule(t, cfg.alpha_horizon)
                    : 1.0;
    rec.sigma = cfg.sigma;
    result.rounds.push_back(rec);
  }
  return result;
}

}  // namespace dpmd
