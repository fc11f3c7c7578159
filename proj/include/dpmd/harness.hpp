#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dpmd/core.hpp"
#include "dpmd/fed.hpp"
#include "dpmd/stability.hpp"
#include "dpmd/synth.hpp"

namespace dpmd {

enum class Algorithm { kColdSgd, kWarmSgd, kPdaExact, kPdaFirstOrder };

const char* algorithm_name(Algorithm algorithm);
std::optional<Algorithm> parse_algorithm(const std::string& name);

struct ExperimentGrid {
  std::vector<double> learning_rates{0.1};
  std::vector<double> clip_norms{1.0};
  std::vector<int> epochs{100};
  // Crossed only for pda_first_order; other algorithms ignore the schedule.
  std::vector<int> alpha_horizons{0};
};

struct ExperimentSpec {
  std::vector<int> dimensions{500};
  std::vector<Algorithm> algorithms{Algorithm::kColdSgd, Algorithm::kWarmSgd,
                                    Algorithm::kPdaExact};
  ExperimentGrid grid;
  int trials = 1;
  double epsilon = 1.0;
  double delta = 1e-5;
  // When set, sigma = noise_multiplier * L / n_private per step and the
  // configured epsilon is reported as externally supplied.
  std::optional<double> noise_multiplier;
  SynthConfig synth;  // p is overridden per dimension
  // Ridges are scale * trace(H)/p; the warm start and the mirror map each
  // get their own scale.
  double warm_start_gamma_scale = 1e-6;
  double mirror_gamma_scale = 1e-6;
  int eval_samples = 10000;
  std::uint64_t base_seed = 1;
  std::string output_path = "runs.csv";
  int workers = 0;     // 0 = hardware concurrency
  bool timing = false; // wall_ms stays 0 unless enabled, keeping output byte-stable
};

// One row per (algorithm, p, grid point, trial).
struct TrialRecord {
  std::string algorithm;
  int p = 0;
  double lr = 0.0;
  double clip = 0.0;
  int epochs = 0;
  int alpha_k = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  double sigma = 0.0;
  double final_train_loss = 0.0;     // private empirical loss, 1/2-squared
  double final_reported_loss = 0.0;  // plain squared error on a fresh draw
  std::int64_t wall_ms = 0;
  std::string status = "ok";
};

// Runs the full (dimension x algorithm x grid x trial) experiment. Trials are
// independent work items on a bounded worker pool; results are deterministic
// for a fixed spec regardless of worker count. Optimizer hard errors abort
// the affected run and leave a failure row.
std::vector<TrialRecord> run_experiment(const ExperimentSpec& spec);

struct SummaryRow {
  std::string algorithm;
  int p = 0;
  double lr = 0.0;
  double clip = 0.0;
  int epochs = 0;
  int alpha_k = 0;
  int trials = 0;
  double mean_loss = 0.0;
  double ci_half_width = 0.0;  // 95% t-interval over trials
};

// Best grid point per (algorithm, p) by mean reported loss; ties broken by
// smallest learning rate, then smallest clip norm.
std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records);

// CSV I/O. Floats are written in shortest round-trip form, so
// write -> read -> write is byte-stable.
void write_records_csv(const std::string& path, const std::vector<TrialRecord>& records);
std::vector<TrialRecord> read_records_csv(const std::string& path);

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);
std::string format_summary(const std::vector<SummaryRow>& rows);

void write_dataset_csv(const std::string& path, const RegressionDataset& data);
RegressionDataset read_dataset_csv(const std::string& path,
                                   Visibility visibility = Visibility::kPrivate);

void write_stability_csv(const std::string& path,
                         const std::vector<StabilityReport>& reports);
void write_fed_rounds_csv(const std::string& path,
                          const std::vector<FedRoundRecord>& rounds);

// JSON config file for the simulate subcommand (schema in the README).
ExperimentSpec load_experiment_spec(const std::string& path);

// Applies the DPMD_OUTPUT_DIR override to a relative output path.
std::string resolve_output_path(const std::string& path);

}  // namespace dpmd
