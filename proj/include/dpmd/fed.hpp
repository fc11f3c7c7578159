#pragma once

#include <functional>
#include <vector>

#include "dpmd/core.hpp"

namespace dpmd {

// Disjoint client shards of one generating process; the first
// n_public_clients shards are designated public and also kept merged for
// server-side public gradients.
struct ClientPopulation {
  std::vector<RegressionDataset> private_clients;
  std::vector<RegressionDataset> public_clients;
  RegressionDataset public_union;  // all public examples merged; empty if none
  int max_examples_per_client = 256;

  Eigen::Index dim() const;
};

struct FedConfig {
  int rounds = 100;
  int clients_per_round = 10;  // m, sampled without replacement
  int local_steps = 1;
  double client_lr = 0.1;
  std::function<double(int)> server_lr = [](int) { return 1.0; };
  double clip_norm = 0.3;  // L, applied to model deltas
  double sigma = 0.4;      // noise multiplier; noise stddev is sigma * L / m
  int alpha_horizon = 0;   // K for the cosine schedule; 0 => alpha == 1
  int local_batch_size = 16;  // 0 => full local batches
};

// Randomly shards `data` into n_clients disjoint clients of (near-)equal
// size, designating the first n_public_clients as public. Throws if some
// client would be empty or exceed the per-client cap.
ClientPopulation partition_clients(const RegressionDataset& data, int n_clients,
                                   int n_public_clients, int cap, RngStream& rng);

// local_steps minibatch gradient steps from theta; returns theta_local - theta.
Vector local_update(const Vector& theta, const RegressionDataset& shard,
                    int local_steps, double client_lr, int batch_size,
                    RngStream& rng);

// One DP-FedAvg round: sample m private clients, clip each model delta to L,
// average, add N(0, (sigma L / m)^2 I), apply the server learning rate.
Vector dp_fedavg_round(const Vector& theta, const ClientPopulation& population,
                       const FedConfig& cfg, int round_t, RngStream& rng);

// Federated first-order PDA-DPMD round: the server combines the noisy private
// aggregate with the full-batch public gradient,
//   theta <- theta + eta_s(t) [alpha_t * noisy_delta - (1 - alpha_t) * grad Psi(theta)].
// alpha_t == 1 reduces exactly to dp_fedavg_round under a shared stream.
Vector pda_dpmd_fed_round(const Vector& theta, const ClientPopulation& population,
                          const FedConfig& cfg, int round_t, RngStream& rng);

enum class FedAlgorithm { kDpFedAvg, kPdaDpmdFed };

struct FedRoundRecord {
  int round = 0;
  double train_loss = 0.0;  // mean over all private examples (1/2-squared)
  double eval_loss = 0.0;   // reported metric on the eval set
  double alpha = 1.0;
  double sigma = 0.0;
};

struct FedRunResult {
  Vector theta;
  std::vector<FedRoundRecord> rounds;
};

double population_private_loss(const Vector& theta, const ClientPopulation& population);

FedRunResult run_fed_simulation(const ClientPopulation& population,
                                const FedConfig& cfg, FedAlgorithm algorithm,
                                const Vector& theta0,
                                const RegressionDataset& eval_data,
                                RngStream& rng);

}  // namespace dpmd
