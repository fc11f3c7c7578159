#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace dpmd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Feature matrices are stored row-major: every hot loop streams over samples.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Visibility { kPublic, kPrivate };

struct RegressionDataset {
  RowMatrix features;  // n x p
  Vector responses;    // n
  Visibility visibility = Visibility::kPrivate;

  Eigen::Index n() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  // Throws std::invalid_argument unless n >= 1, p >= 1 and sizes agree.
  void validate() const;
};

// L2 norm of every row, computed once per run by callers that need it.
Vector row_l2_norms(const RowMatrix& features);

// Deterministic seeded randomness. Same (seed, stream id) gives a
// bit-identical draw sequence on the same build. Streams are never shared
// between concurrent units; derive() yields an independent child stream.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  double normal();   // N(0, 1)
  double uniform();  // [0, 1)
  std::uint64_t uniform_int(std::uint64_t bound);  // uniform on [0, bound)

  Vector normal_vector(Eigen::Index p, double stddev = 1.0);

  // First `count` entries of a uniformly random permutation of [0, population).
  std::vector<int> sample_without_replacement(int population, int count);
  void shuffle(std::vector<int>& values);

  RngStream derive(std::uint64_t substream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// splitmix64-based combiner used for deriving per-(trial, purpose) seeds.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

// ell(theta; x, y) = 1/2 (y - <x, theta>)^2
double regression_loss(const Vector& theta, const Vector& x, double y);

// grad_theta ell = -(y - <x, theta>) x
Vector regression_gradient(const Vector& theta, const Vector& x, double y);

// Mean of per-sample losses over the dataset (1/2-squared convention).
double batch_loss(const Vector& theta, const RegressionDataset& data);

// Reported metric: mean plain squared error (y - <x, theta>)^2. Twice
// batch_loss; kept separate so the synthetic generator's noise variance is
// directly comparable to reported losses.
double mean_squared_error(const Vector& theta, const RegressionDataset& data);

// Throws std::runtime_error if any entry is NaN or infinite.
void check_finite(const Vector& theta, const char* what = "iterate");

// Per-sample loss/gradient pair for optimizers that run on a loss family
// other than the built-in linear regression one.
struct LossModel {
  std::function<double(const Vector& theta, const Vector& x, double y)> loss;
  std::function<Vector(const Vector& theta, const Vector& x, double y)> gradient;
};

LossModel linear_regression_model();

}  // namespace dpmd
