#include "dpmd/synth.hpp"

#include <cmath>
#include <stdexcept>

namespace dpmd {

int SynthConfig::n_public() const {
  return static_cast<int>(std::llround(public_multiplier * static_cast<double>(p)));
}

void SynthConfig::validate() const {
  if (p < 5 || p % 5 != 0) {
    throw std::invalid_argument("SynthConfig: p must be a positive multiple of 5");
  }
  if (nnz_first_block < 0 || nnz_last_block < 0) {
    throw std::invalid_argument("SynthConfig: nonzero counts must be >= 0");
  }
  if (p / 5 < nnz_first_block || 4 * (p / 5) < nnz_last_block) {
    throw std::invalid_argument("SynthConfig: block too small for requested nonzeros");
  }
  if (n_private < 1 || n_public() < 1) {
    throw std::invalid_argument("SynthConfig: dataset sizes must be >= 1");
  }
  if (noise_variance < 0.0) {
    throw std::invalid_argument("SynthConfig: noise variance must be >= 0");
  }
}

Vector gen_theta_star(int p, RngStream& rng) {
  if (p < 1) throw std::invalid_argument("gen_theta_star: p must be >= 1");
  return rng.normal_vector(p);
}

namespace {

void fill_feature_row(Eigen::Ref<Eigen::RowVectorXd> row, const SynthConfig& cfg,
                      RngStream& rng) {
  const int b1 = cfg.p / 5;
  row.setZero();
  for (int i : rng.sample_without_replacement(b1, cfg.nnz_first_block)) {
    row[i] = cfg.feature_value;
  }
  for (int i : rng.sample_without_replacement(cfg.p - b1, cfg.nnz_last_block)) {
    row[b1 + i] = cfg.feature_value;
  }
}

}  // namespace

Vector gen_feature(int p, const SynthConfig& cfg, RngStream& rng) {
  SynthConfig local = cfg;
  local.p = p;
  local.validate();
  Eigen::RowVectorXd row(p);
  fill_feature_row(row, local, rng);
  return row.transpose();
}

double gen_response(const Vector& x, const Vector& theta_star,
                    const SynthConfig& cfg, RngStream& rng) {
  if (x.size() != theta_star.size()) {
    throw std::invalid_argument("gen_response: dimension mismatch");
  }
  const double mean = x.dot(theta_star);
  if (cfg.noise_variance == 0.0) return mean;
  return mean + std::sqrt(cfg.noise_variance) * rng.normal();
}

RegressionDataset gen_dataset(int n, const Vector& theta_star,
                              const SynthConfig& cfg, Visibility visibility,
                              RngStream& rng) {
  cfg.validate();
  if (n < 1) throw std::invalid_argument("gen_dataset: n must be >= 1");
  if (theta_star.size() != cfg.p) {
    throw std::invalid_argument("gen_dataset: theta* dimension mismatch");
  }
  RegressionDataset data;
  data.features.resize(n, cfg.p);
  data.responses.resize(n);
  data.visibility = visibility;
  const double noise_sd = std::sqrt(cfg.noise_variance);
  for (int i = 0; i < n; ++i) {
    fill_feature_row(data.features.row(i), cfg, rng);
    data.responses[i] =
        data.features.row(i).dot(theta_star) + noise_sd * rng.normal();
  }
  return data;
}

std::tuple<RegressionDataset, RegressionDataset, Vector> gen_split(
    const SynthConfig& cfg, const RngStream& rng) {
  cfg.validate();
  RngStream theta_rng = rng.derive(0);
  RngStream pub_rng = rng.derive(1);
  RngStream priv_rng = rng.derive(2);
  Vector theta_star = gen_theta_star(cfg.p, theta_rng);
  RegressionDataset pub =
      gen_dataset(cfg.n_public(), theta_star, cfg, Visibility::kPublic, pub_rng);
  RegressionDataset priv =
      gen_dataset(cfg.n_private, theta_star, cfg, Visibility::kPrivate, priv_rng);
  return {std::move(pub), std::move(priv), std::move(theta_star)};
}

Matrix analytic_population_hessian(const SynthConfig& cfg) {
  cfg.validate();
  const int p = cfg.p;
  const int b1 = p / 5;
  const int b2 = p - b1;
  const double v2 = cfg.feature_value * cfg.feature_value;
  const double k1 = cfg.nnz_first_block;
  const double k2 = cfg.nnz_last_block;

  const double diag1 = v2 * k1 / b1;
  const double diag2 = v2 * k2 / b2;
  const double off1 = b1 > 1 ? v2 * k1 * (k1 - 1.0) / (b1 * (b1 - 1.0)) : 0.0;
  const double off2 = b2 > 1 ? v2 * k2 * (k2 - 1.0) / (b2 * (b2 - 1.0)) : 0.0;
  const double cross = v2 * (k1 / b1) * (k2 / b2);

  Matrix h(p, p);
  h.topLeftCorner(b1, b1).setConstant(off1);
  h.bottomRightCorner(b2, b2).setConstant(off2);
  h.topRightCorner(b1, b2).setConstant(cross);
  h.bottomLeftCorner(b2, b1).setConstant(cross);
  h.topLeftCorner(b1, b1).diagonal().setConstant(diag1);
  h.bottomRightCorner(b2, b2).diagonal().setConstant(diag2);
  return h;
}

}  // namespace dpmd
