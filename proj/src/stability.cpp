#include "dpmd/stability.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dpmd {

namespace {

void require_unit(const Vector& v) {
  if (std::abs(v.norm() - 1.0) > 1e-10) {
    throw std::invalid_argument("direction must be a unit vector");
  }
}

}  // namespace

double analytic_shift(const QuadraticMirrorMap& map, double eta, double sigma,
                      const Vector& v) {
  if (v.size() != map.dim()) throw std::invalid_argument("analytic_shift: dimension mismatch");
  require_unit(v);
  const Vector a = map.eigenvectors().transpose() * v;
  const double sum = a.cwiseQuotient(map.eigenvalues()).squaredNorm();
  return eta * sigma * std::sqrt(2.0 / std::numbers::pi * sum);
}

double monte_carlo_shift(const QuadraticMirrorMap& map, double eta, double sigma,
                         const Vector& v, int samples, RngStream& rng) {
  if (v.size() != map.dim()) throw std::invalid_argument("monte_carlo_shift: dimension mismatch");
  require_unit(v);
  if (samples < 1) throw std::invalid_argument("monte_carlo_shift: samples must be >= 1");
  if (sigma == 0.0) return 0.0;
  const Eigen::Index p = map.dim();
  double acc = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Vector noise = rng.normal_vector(p, sigma);
    const Vector displacement = -eta * map.inverse_apply(noise);
    acc += std::abs(displacement.dot(v));
  }
  return acc / static_cast<double>(samples);
}

std::vector<StabilityReport> stability_sweep(const QuadraticMirrorMap& map,
                                             double eta, double sigma,
                                             const std::vector<Vector>& directions,
                                             int samples, RngStream& rng) {
  std::vector<Vector> all;
  all.reserve(static_cast<std::size_t>(map.dim()) + directions.size());
  for (Eigen::Index i = 0; i < map.dim(); ++i) {
    all.push_back(map.eigenvectors().col(i));
  }
  all.insert(all.end(), directions.begin(), directions.end());

  std::vector<StabilityReport> reports;
  reports.reserve(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    StabilityReport r;
    r.direction_id = static_cast<int>(i);
    r.direction = all[i];
    r.analytic = analytic_shift(map, eta, sigma, all[i]);
    r.monte_carlo = monte_carlo_shift(map, eta, sigma, all[i], samples, rng);
    r.samples = samples;
    r.relative_error =
        r.analytic > 0.0 ? std::abs(r.monte_carlo - r.analytic) / r.analytic : 0.0;
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace dpmd
