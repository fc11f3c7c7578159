#pragma once

#include <tuple>

#include "dpmd/core.hpp"

namespace dpmd {

// Synthetic linear-regression generator: theta* ~ N(0, I_p); each feature
// vector has nnz_first_block entries of the first p/5 coordinates and
// nnz_last_block of the remaining 4p/5 set to feature_value (chosen uniformly
// without replacement), all other coordinates zero; responses are
// <x, theta*> + N(0, noise_variance).
struct SynthConfig {
  int p = 500;  // multiple of 5
  int n_private = 10000;
  double public_multiplier = 1.5;  // n_pub = round(multiplier * p)
  double noise_variance = 0.01;
  int nnz_first_block = 40;
  int nnz_last_block = 80;
  double feature_value = 0.05;
  std::uint64_t seed = 0;

  int n_public() const;
  // Throws std::invalid_argument unless p is a positive multiple of 5 with
  // p/5 >= nnz_first_block and 4p/5 >= nnz_last_block.
  void validate() const;
};

Vector gen_theta_star(int p, RngStream& rng);

Vector gen_feature(int p, const SynthConfig& cfg, RngStream& rng);

double gen_response(const Vector& x, const Vector& theta_star,
                    const SynthConfig& cfg, RngStream& rng);

// Generates a dataset of `n` i.i.d. samples against theta_star.
RegressionDataset gen_dataset(int n, const Vector& theta_star,
                              const SynthConfig& cfg, Visibility visibility,
                              RngStream& rng);

// theta*, then public and private sets drawn i.i.d. from the same process.
// Substreams: 0 = theta*, 1 = public set, 2 = private set, so resizing one
// set never perturbs the others.
std::tuple<RegressionDataset, RegressionDataset, Vector> gen_split(
    const SynthConfig& cfg, const RngStream& rng);

// Closed-form E[x x^T] of the feature distribution (the population Hessian of
// the half-squared loss). Singular by construction: block nonzero counts are
// deterministic, so one direction never varies.
Matrix analytic_population_hessian(const SynthConfig& cfg);

}  // namespace dpmd
