#include "dpmd/core.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dpmd {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void RegressionDataset::validate() const {
  if (features.rows() < 1 || features.cols() < 1) {
    throw std::invalid_argument("dataset must have n >= 1 and p >= 1");
  }
  if (responses.size() != features.rows()) {
    throw std::invalid_argument("responses length must equal feature row count");
  }
}

Vector row_l2_norms(const RowMatrix& features) {
  return features.rowwise().norm();
}

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x2545f4914f6cdd1dULL;
  for (std::uint64_t part : parts) {
    h = splitmix64(h ^ splitmix64(part));
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(mix_seed({seed, stream_id})) {}

double RngStream::normal() { return normal_(engine_); }

double RngStream::uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

std::uint64_t RngStream::uniform_int(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_int bound must be positive");
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw;
  do {
    draw = engine_();
  } while (draw >= limit);
  return draw % bound;
}

Vector RngStream::normal_vector(Eigen::Index p, double stddev) {
  Vector out(p);
  for (Eigen::Index i = 0; i < p; ++i) out[i] = stddev * normal_(engine_);
  return out;
}

std::vector<int> RngStream::sample_without_replacement(int population, int count) {
  if (count < 0 || count > population) {
    throw std::invalid_argument("sample_without_replacement: count out of range");
  }
  std::vector<int> idx(population);
  for (int i = 0; i < population; ++i) idx[i] = i;
  // Partial Fisher-Yates; pinned here rather than std::sample so the
  // sequence does not depend on the standard library implementation.
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(uniform_int(static_cast<std::uint64_t>(population - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

void RngStream::shuffle(std::vector<int>& values) {
  for (int i = static_cast<int>(values.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(uniform_int(static_cast<std::uint64_t>(i + 1)));
    std::swap(values[i], values[j]);
  }
}

RngStream RngStream::derive(std::uint64_t substream) const {
  return RngStream(mix_seed({seed_, stream_id_, 0x646572697665ULL}), substream);
}

double regression_loss(const Vector& theta, const Vector& x, double y) {
  if (theta.size() != x.size()) {
    throw std::invalid_argument("regression_loss: dimension mismatch");
  }
  const double r = y - x.dot(theta);
  return 0.5 * r * r;
}

Vector regression_gradient(const Vector& theta, const Vector& x, double y) {
  if (theta.size() != x.size()) {
    throw std::invalid_argument("regression_gradient: dimension mismatch");
  }
  return -(y - x.dot(theta)) * x;
}

double batch_loss(const Vector& theta, const RegressionDataset& data) {
  data.validate();
  if (theta.size() != data.dim()) {
    throw std::invalid_argument("batch_loss: dimension mismatch");
  }
  const Vector r = data.responses - data.features * theta;
  return 0.5 * r.squaredNorm() / static_cast<double>(data.n());
}

double mean_squared_error(const Vector& theta, const RegressionDataset& data) {
  return 2.0 * batch_loss(theta, data);
}

void check_finite(const Vector& theta, const char* what) {
  if (!theta.allFinite()) {
    throw std::runtime_error(std::string(what) + " has NaN or infinite entries");
  }
}

LossModel linear_regression_model() {
  return LossModel{
      [](const Vector& theta, const Vector& x, double y) { return regression_loss(theta, x, y); },
      [](const Vector& theta, const Vector& x, double y) { return regression_gradient(theta, x, y); },
  };
}

}  // namespace dpmd
