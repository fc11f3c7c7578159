#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpmd/dp.hpp"
#include "dpmd/fed.hpp"
#include "dpmd/harness.hpp"
#include "dpmd/mirror.hpp"
#include "dpmd/optim.hpp"
#include "dpmd/stability.hpp"
#include "dpmd/synth.hpp"

namespace {

void add_synth_options(CLI::App* cmd, dpmd::SynthConfig& cfg) {
  cmd->add_option("--n-private", cfg.n_private, "private sample count");
  cmd->add_option("--public-multiplier", cfg.public_multiplier, "n_pub = round(mult * p)");
  cmd->add_option("--noise-variance", cfg.noise_variance, "response noise variance");
  cmd->add_option("--nnz-first", cfg.nnz_first_block, "nonzeros in the first p/5 block");
  cmd->add_option("--nnz-last", cfg.nnz_last_block, "nonzeros in the last 4p/5 block");
  cmd->add_option("--feature-value", cfg.feature_value, "value of nonzero features");
}

int run_calibrate(double eps, double delta, double clip, int steps, int n) {
  const double sigma = dpmd::calibrate_sigma(clip, steps, eps, delta, n);
  std::cout << std::setprecision(12) << "sigma = " << sigma << "\n"
            << "sigma^2 = " << sigma * sigma << "\n";
  return 0;
}

int run_gen_data(const dpmd::SynthConfig& cfg, const std::string& out_public,
                 const std::string& out_private, const std::string& out_theta) {
  auto [pub, priv, theta_star] = dpmd::gen_split(cfg, dpmd::RngStream(cfg.seed));
  dpmd::write_dataset_csv(dpmd::resolve_output_path(out_public), pub);
  dpmd::write_dataset_csv(dpmd::resolve_output_path(out_private), priv);
  if (!out_theta.empty()) {
    std::ofstream out(dpmd::resolve_output_path(out_theta), std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + out_theta);
    out << std::setprecision(17) << "theta\n";
    for (Eigen::Index i = 0; i < theta_star.size(); ++i) out << theta_star[i] << "\n";
  }
  std::cout << "wrote " << pub.n() << " public and " << priv.n()
            << " private samples at p = " << cfg.p << "\n";
  return 0;
}

int run_simulate(const std::string& config_path, const std::string& output_override) {
  dpmd::ExperimentSpec spec = dpmd::load_experiment_spec(config_path);
  if (!output_override.empty()) spec.output_path = output_override;
  const std::vector<dpmd::TrialRecord> records = dpmd::run_experiment(spec);
  const std::string path = dpmd::resolve_output_path(spec.output_path);
  dpmd::write_records_csv(path, records);
  std::cout << "wrote " << records.size() << " records to " << path << "\n";
  return 0;
}

int run_stability(int p, double eta, double sigma, int samples, int n_pub,
                  int random_directions, std::uint64_t seed,
                  const dpmd::SynthConfig& synth, const std::string& out) {
  dpmd::SynthConfig cfg = synth;
  cfg.p = p;
  cfg.validate();
  dpmd::RngStream rng(seed);
  dpmd::RngStream data_rng = rng.derive(1);
  dpmd::RngStream theta_rng = rng.derive(2);
  dpmd::RngStream dir_rng = rng.derive(3);
  dpmd::RngStream mc_rng = rng.derive(4);

  const dpmd::Vector theta_star = dpmd::gen_theta_star(p, theta_rng);
  const int n = n_pub > 0 ? n_pub : cfg.n_public();
  const dpmd::RegressionDataset pub = dpmd::gen_dataset(
      n, theta_star, cfg, dpmd::Visibility::kPublic, data_rng);
  const dpmd::Matrix hessian = dpmd::build_public_hessian(pub);
  const dpmd::QuadraticMirrorMap map =
      dpmd::regularize_normalize(hessian, dpmd::default_ridge(hessian));

  std::vector<dpmd::Vector> extra;
  for (int k = 0; k < random_directions; ++k) {
    dpmd::Vector v = dir_rng.normal_vector(p);
    extra.push_back(v / v.norm());
  }
  const auto reports = dpmd::stability_sweep(map, eta, sigma, extra, samples, mc_rng);
  dpmd::write_stability_csv(dpmd::resolve_output_path(out), reports);

  double worst = 0.0;
  for (const auto& r : reports) worst = std::max(worst, r.relative_error);
  std::cout << "wrote " << reports.size() << " directions, max relative error "
            << worst << "\n";
  return 0;
}

int run_fedsim(int p, int n_examples, int n_clients, int n_public_clients, int cap,
               dpmd::FedConfig cfg, double server_lr, const std::string& algorithm,
               double warm_gamma_scale, int eval_samples, std::uint64_t seed,
               const dpmd::SynthConfig& synth, const std::string& out) {
  dpmd::SynthConfig scfg = synth;
  scfg.p = p;
  scfg.validate();
  cfg.server_lr = dpmd::constant_lr(server_lr);

  dpmd::RngStream rng(seed);
  dpmd::RngStream theta_rng = rng.derive(1);
  dpmd::RngStream data_rng = rng.derive(2);
  dpmd::RngStream part_rng = rng.derive(3);
  dpmd::RngStream eval_rng = rng.derive(4);
  dpmd::RngStream round_rng = rng.derive(5);

  const dpmd::Vector theta_star = dpmd::gen_theta_star(p, theta_rng);
  const dpmd::RegressionDataset all = dpmd::gen_dataset(
      n_examples, theta_star, scfg, dpmd::Visibility::kPrivate, data_rng);
  const dpmd::RegressionDataset eval_set = dpmd::gen_dataset(
      eval_samples, theta_star, scfg, dpmd::Visibility::kPublic, eval_rng);
  const dpmd::ClientPopulation population =
      dpmd::partition_clients(all, n_clients, n_public_clients, cap, part_rng);

  dpmd::Vector theta0;
  if (population.public_union.n() > 0) {
    const dpmd::Matrix h = dpmd::build_public_hessian(population.public_union);
    theta0 = dpmd::warm_start(population.public_union,
                              warm_gamma_scale * h.trace() / static_cast<double>(p));
  } else {
    theta0 = dpmd::Vector::Zero(p);
  }

  dpmd::FedAlgorithm alg;
  if (algorithm == "dp_fedavg") {
    alg = dpmd::FedAlgorithm::kDpFedAvg;
  } else if (algorithm == "pda_dpmd") {
    alg = dpmd::FedAlgorithm::kPdaDpmdFed;
  } else {
    throw std::runtime_error("unknown federated algorithm: " + algorithm);
  }

  const dpmd::FedRunResult result =
      dpmd::run_fed_simulation(population, cfg, alg, theta0, eval_set, round_rng);
  dpmd::write_fed_rounds_csv(dpmd::resolve_output_path(out), result.rounds);
  std::cout << "wrote " << result.rounds.size() << " rounds, final eval loss "
            << (result.rounds.empty() ? 0.0 : result.rounds.back().eval_loss) << "\n";
  return 0;
}

int run_summarize(const std::string& in_path, const std::string& out_path) {
  const auto records = dpmd::read_records_csv(in_path);
  const auto rows = dpmd::summarize(records);
  std::cout << dpmd::format_summary(rows);
  if (!out_path.empty()) {
    dpmd::write_summary_csv(dpmd::resolve_output_path(out_path), rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private optimization toolkit (PDA-DPMD, DP-SGD, DP-FedAvg)"};
  app.require_subcommand(1);

  // calibrate
  double eps = 1.0, delta = 1e-5, clip = 1.0;
  int steps = 100, n_priv = 1000;
  CLI::App* calibrate = app.add_subcommand("calibrate", "print the Gaussian noise scale");
  calibrate->add_option("--eps", eps, "epsilon")->required();
  calibrate->add_option("--delta", delta, "delta")->required();
  calibrate->add_option("--clip", clip, "clipping norm L")->required();
  calibrate->add_option("--steps", steps, "iteration count T")->required();
  calibrate->add_option("--n", n_priv, "private sample count")->required();

  // gen-data
  dpmd::SynthConfig gen_cfg;
  std::string out_public = "public.csv", out_private = "private.csv", out_theta;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic public/private split");
  gen->add_option("--p", gen_cfg.p, "dimension (multiple of 5)")->required();
  gen->add_option("--seed", gen_cfg.seed, "base seed");
  add_synth_options(gen, gen_cfg);
  gen->add_option("--out-public", out_public, "public CSV path");
  gen->add_option("--out-private", out_private, "private CSV path");
  gen->add_option("--out-theta", out_theta, "optional theta* CSV path");

  // simulate
  std::string config_path, output_override;
  CLI::App* simulate = app.add_subcommand("simulate", "run an experiment from a JSON config");
  simulate->add_option("--config", config_path, "JSON config path")->required();
  simulate->add_option("--output", output_override, "override the output CSV path");

  // stability
  int st_p = 200, st_samples = 100000, st_npub = 0, st_random = 4;
  double st_eta = 0.5, st_sigma = 0.01;
  std::uint64_t st_seed = 1;
  dpmd::SynthConfig st_synth;
  std::string st_out = "stability.csv";
  CLI::App* stability = app.add_subcommand(
      "stability", "verify the noise-stability formula by Monte Carlo");
  stability->add_option("--p", st_p, "dimension (multiple of 5)");
  stability->add_option("--eta", st_eta, "step size");
  stability->add_option("--sigma", st_sigma, "noise scale");
  stability->add_option("--samples", st_samples, "Monte-Carlo samples per direction");
  stability->add_option("--n-pub", st_npub, "public samples (0 = 1.5p)");
  stability->add_option("--random-directions", st_random, "extra random unit directions");
  stability->add_option("--seed", st_seed, "base seed");
  add_synth_options(stability, st_synth);
  stability->add_option("--out", st_out, "output CSV path");

  // fedsim
  int fd_p = 50, fd_examples = 4000, fd_clients = 80, fd_public_clients = 8;
  int fd_cap = 256, fd_eval = 2000;
  double fd_server_lr = 1.0, fd_warm_scale = 1e-6;
  std::uint64_t fd_seed = 1;
  std::string fd_alg = "pda_dpmd", fd_out = "fed_rounds.csv";
  dpmd::FedConfig fed_cfg;
  dpmd::SynthConfig fd_synth;
  fd_synth.nnz_first_block = 4;
  fd_synth.nnz_last_block = 8;
  CLI::App* fedsim = app.add_subcommand("fedsim", "desk-scale federated simulation");
  fedsim->add_option("--p", fd_p, "dimension (multiple of 5)");
  fedsim->add_option("--examples", fd_examples, "total private examples");
  fedsim->add_option("--clients", fd_clients, "client count");
  fedsim->add_option("--public-clients", fd_public_clients, "public client count");
  fedsim->add_option("--cap", fd_cap, "max examples per client");
  fedsim->add_option("--rounds", fed_cfg.rounds, "training rounds");
  fedsim->add_option("--clients-per-round", fed_cfg.clients_per_round, "sampled clients m");
  fedsim->add_option("--local-steps", fed_cfg.local_steps, "local gradient steps");
  fedsim->add_option("--client-lr", fed_cfg.client_lr, "client learning rate");
  fedsim->add_option("--server-lr", fd_server_lr, "server learning rate");
  fedsim->add_option("--clip", fed_cfg.clip_norm, "model-delta clipping norm L");
  fedsim->add_option("--noise-multiplier", fed_cfg.sigma, "noise multiplier sigma");
  fedsim->add_option("--alpha-k", fed_cfg.alpha_horizon, "cosine horizon K (0 = alpha 1)");
  fedsim->add_option("--local-batch", fed_cfg.local_batch_size, "local batch size");
  fedsim->add_option("--algorithm", fd_alg, "dp_fedavg or pda_dpmd");
  fedsim->add_option("--warm-gamma-scale", fd_warm_scale, "warm-start ridge scale");
  fedsim->add_option("--eval-samples", fd_eval, "evaluation sample count");
  fedsim->add_option("--seed", fd_seed, "base seed");
  add_synth_options(fedsim, fd_synth);
  fedsim->add_option("--out", fd_out, "output CSV path");

  // summarize
  std::string sum_in, sum_out;
  CLI::App* summarize = app.add_subcommand("summarize", "best-grid summary of a results CSV");
  summarize->add_option("--in", sum_in, "input records CSV")->required();
  summarize->add_option("--out", sum_out, "optional output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (calibrate->parsed()) return run_calibrate(eps, delta, clip, steps, n_priv);
    if (gen->parsed()) return run_gen_data(gen_cfg, out_public, out_private, out_theta);
    if (simulate->parsed()) return run_simulate(config_path, output_override);
    if (stability->parsed()) {
      return run_stability(st_p, st_eta, st_sigma, st_samples, st_npub, st_random,
                           st_seed, st_synth, st_out);
    }
    if (fedsim->parsed()) {
      return run_fedsim(fd_p, fd_examples, fd_clients, fd_public_clients, fd_cap,
                        fed_cfg, fd_server_lr, fd_alg, fd_warm_scale, fd_eval,
                        fd_seed, fd_synth, fd_out);
    }
    if (summarize->parsed()) return run_summarize(sum_in, sum_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
