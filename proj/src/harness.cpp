#include "dpmd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "dpmd/dp.hpp"
#include "dpmd/mirror.hpp"
#include "dpmd/optim.hpp"

namespace dpmd {

namespace {

// Purpose tags for per-trial seed derivation.
constexpr std::uint64_t kDataPurpose = 0xd475;
constexpr std::uint64_t kEvalPurpose = 0xe7a1;
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kOptimizerStream = 2;

constexpr const char* kRecordsHeader =
    "algorithm,p,lr,clip,epochs,alpha_K,trial,seed,sigma,final_train_loss,"
    "final_reported_loss,wall_ms,status";

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("failed to format double");
  return std::string(buf, ptr);
}

double parse_double(const std::string& text) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::runtime_error("bad numeric field: '" + text + "'");
  }
  return value;
}

std::int64_t parse_int(const std::string& text) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::runtime_error("bad integer field: '" + text + "'");
  }
  return value;
}

std::uint64_t parse_uint(const std::string& text) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::runtime_error("bad unsigned field: '" + text + "'");
  }
  return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string sanitize_status(const std::string& text) {
  std::string out = text;
  for (char& c : out) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return out.empty() ? std::string("error") : out;
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::ifstream open_for_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

struct GridPoint {
  double lr = 0.0;
  double clip = 0.0;
  int epochs = 0;
  int alpha_k = 0;
};

std::vector<GridPoint> expand_grid(const ExperimentGrid& grid, Algorithm algorithm) {
  if (grid.learning_rates.empty() || grid.clip_norms.empty() || grid.epochs.empty()) {
    throw std::invalid_argument("grid axes must be nonempty");
  }
  const bool uses_alpha = algorithm == Algorithm::kPdaFirstOrder;
  std::vector<int> alphas = uses_alpha ? grid.alpha_horizons : std::vector<int>{0};
  if (alphas.empty()) alphas.push_back(0);
  std::vector<GridPoint> points;
  for (double lr : grid.learning_rates) {
    for (double clip : grid.clip_norms) {
      for (int epochs : grid.epochs) {
        for (int alpha : alphas) {
          points.push_back({lr, clip, epochs, alpha});
        }
      }
    }
  }
  return points;
}

struct PlannedRun {
  std::size_t slot = 0;
  Algorithm algorithm = Algorithm::kColdSgd;
  GridPoint point;
  int grid_index = 0;
  int p = 0;
  int trial = 0;
};

}  // namespace

const char* algorithm_name(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kColdSgd: return "cold_sgd";
    case Algorithm::kWarmSgd: return "warm_sgd";
    case Algorithm::kPdaExact: return "pda_exact";
    case Algorithm::kPdaFirstOrder: return "pda_first_order";
  }
  return "unknown";
}

std::optional<Algorithm> parse_algorithm(const std::string& name) {
  if (name == "cold_sgd") return Algorithm::kColdSgd;
  if (name == "warm_sgd") return Algorithm::kWarmSgd;
  if (name == "pda_exact") return Algorithm::kPdaExact;
  if (name == "pda_first_order") return Algorithm::kPdaFirstOrder;
  return std::nullopt;
}

std::vector<TrialRecord> run_experiment(const ExperimentSpec& spec) {
  if (spec.trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (spec.dimensions.empty() || spec.algorithms.empty()) {
    throw std::invalid_argument("dimensions and algorithms must be nonempty");
  }

  // Plan every run up front in canonical (algorithm, p, grid, trial) order so
  // the output does not depend on worker scheduling.
  std::vector<PlannedRun> plan;
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_item;  // (p, trial)
  for (Algorithm algorithm : spec.algorithms) {
    const std::vector<GridPoint> points = expand_grid(spec.grid, algorithm);
    for (int p : spec.dimensions) {
      for (int g = 0; g < static_cast<int>(points.size()); ++g) {
        for (int trial = 0; trial < spec.trials; ++trial) {
          PlannedRun run;
          run.slot = plan.size();
          run.algorithm = algorithm;
          run.point = points[g];
          run.grid_index = g;
          run.p = p;
          run.trial = trial;
          by_item[{p, trial}].push_back(run.slot);
          plan.push_back(run);
        }
      }
    }
  }

  std::vector<TrialRecord> records(plan.size());
  std::vector<std::pair<int, int>> items;
  items.reserve(by_item.size());
  for (const auto& [key, _] : by_item) items.push_back(key);

  const bool needs_warm =
      std::any_of(spec.algorithms.begin(), spec.algorithms.end(), [](Algorithm a) {
        return a != Algorithm::kColdSgd;
      });
  const bool needs_map =
      std::any_of(spec.algorithms.begin(), spec.algorithms.end(), [](Algorithm a) {
        return a == Algorithm::kPdaExact;
      });

  auto fill_static_fields = [&](TrialRecord& rec, const PlannedRun& run) {
    rec.algorithm = algorithm_name(run.algorithm);
    rec.p = run.p;
    rec.lr = run.point.lr;
    rec.clip = run.point.clip;
    rec.epochs = run.point.epochs;
    rec.alpha_k = run.point.alpha_k;
    rec.trial = run.trial;
    rec.seed = mix_seed({spec.base_seed, static_cast<std::uint64_t>(run.p),
                         static_cast<std::uint64_t>(run.algorithm),
                         static_cast<std::uint64_t>(run.grid_index),
                         static_cast<std::uint64_t>(run.trial)});
  };

  auto process_item = [&](int p, int trial) {
    SynthConfig cfg = spec.synth;
    cfg.p = p;

    const std::uint64_t data_seed =
        mix_seed({spec.base_seed, static_cast<std::uint64_t>(p),
                  static_cast<std::uint64_t>(trial), kDataPurpose});
    const std::uint64_t eval_seed =
        mix_seed({spec.base_seed, static_cast<std::uint64_t>(p),
                  static_cast<std::uint64_t>(trial), kEvalPurpose});

    const auto& slots = by_item.at({p, trial});
    try {
      auto [pub, priv, theta_star] = gen_split(cfg, RngStream(data_seed));
      RngStream eval_rng(eval_seed);
      const RegressionDataset eval_set = gen_dataset(
          spec.eval_samples, theta_star, cfg, Visibility::kPublic, eval_rng);

      Vector theta_warm;
      std::optional<QuadraticMirrorMap> map;
      if (needs_warm || needs_map) {
        const Matrix hessian = build_public_hessian(pub);
        const double mean_eig = hessian.trace() / static_cast<double>(p);
        if (needs_warm) {
          theta_warm = public_optimum(pub, spec.warm_start_gamma_scale * mean_eig);
        }
        if (needs_map) {
          map = regularize_normalize(hessian, spec.mirror_gamma_scale * mean_eig);
        }
      }

      for (std::size_t slot : slots) {
        const PlannedRun& run = plan[slot];
        TrialRecord& rec = records[slot];
        fill_static_fields(rec, run);
        const auto start = std::chrono::steady_clock::now();
        try {
          PrivacyConfig pcfg =
              spec.noise_multiplier
                  ? PrivacyConfig::external(*spec.noise_multiplier * run.point.clip /
                                                static_cast<double>(cfg.n_private),
                                            run.point.clip, run.point.epochs,
                                            cfg.n_private)
                  : PrivacyConfig::calibrated(spec.epsilon, spec.delta,
                                              run.point.clip, run.point.epochs,
                                              cfg.n_private);
          OptimizerConfig ocfg;
          ocfg.learning_rate = constant_lr(run.point.lr);
          ocfg.steps = run.point.epochs;
          ocfg.alpha_horizon = run.point.alpha_k;
          ocfg.eval_stride = 0;

          RngStream root(rec.seed);
          RngStream opt_rng = root.derive(kOptimizerStream);
          RunResult result;
          switch (run.algorithm) {
            case Algorithm::kColdSgd: {
              RngStream init_rng = root.derive(kInitStream);
              const Vector theta0 = init_rng.normal_vector(p);
              result = dp_sgd(priv, theta0, pcfg, ocfg, opt_rng);
              break;
            }
            case Algorithm::kWarmSgd:
              result = dp_sgd(priv, theta_warm, pcfg, ocfg, opt_rng);
              break;
            case Algorithm::kPdaExact:
              result = pda_dpmd_exact(priv, *map, theta_warm, pcfg, ocfg, opt_rng);
              break;
            case Algorithm::kPdaFirstOrder:
              result = pda_dpmd_first_order(priv, pub, theta_warm, pcfg, ocfg, opt_rng);
              break;
          }
          rec.sigma = result.sigma;
          rec.final_train_loss = batch_loss(result.theta, priv);
          rec.final_reported_loss = mean_squared_error(result.theta, eval_set);
          rec.status = "ok";
        } catch (const std::exception& e) {
          rec.sigma = 0.0;
          rec.final_train_loss = std::numeric_limits<double>::quiet_NaN();
          rec.final_reported_loss = std::numeric_limits<double>::quiet_NaN();
          rec.status = sanitize_status(std::string("error: ") + e.what());
        }
        if (spec.timing) {
          rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
        }
      }
    } catch (const std::exception& e) {
      const std::string status = sanitize_status(std::string("error: ") + e.what());
      for (std::size_t slot : slots) {
        TrialRecord& rec = records[slot];
        fill_static_fields(rec, plan[slot]);
        rec.final_train_loss = std::numeric_limits<double>::quiet_NaN();
        rec.final_reported_loss = std::numeric_limits<double>::quiet_NaN();
        rec.status = status;
      }
    }
  };

  int workers = spec.workers > 0 ? spec.workers
                                 : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(items.size())));

  if (workers == 1) {
    for (const auto& [p, trial] : items) process_item(p, trial);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= items.size()) return;
          process_item(items[i].first, items[i].second);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }
  return records;
}

std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records) {
  using CellKey = std::tuple<double, double, int, int>;  // lr, clip, epochs, alpha
  std::map<std::pair<std::string, int>, std::map<CellKey, std::vector<double>>> groups;
  for (const TrialRecord& rec : records) {
    if (rec.status != "ok") continue;
    groups[{rec.algorithm, rec.p}][{rec.lr, rec.clip, rec.epochs, rec.alpha_k}]
        .push_back(rec.final_reported_loss);
  }
  if (groups.empty()) throw std::invalid_argument("summarize: empty cell (no ok records)");

  std::vector<SummaryRow> rows;
  for (const auto& [key, cells] : groups) {
    SummaryRow best;
    double best_mean = std::numeric_limits<double>::infinity();
    CellKey best_key{};
    bool found = false;
    for (const auto& [cell, losses] : cells) {
      if (losses.empty()) continue;
      double mean = 0.0;
      for (double v : losses) mean += v;
      mean /= static_cast<double>(losses.size());
      // Ties go to the smallest learning rate, then the smallest clip norm;
      // the map's key order supplies the remaining determinism.
      const bool better = mean < best_mean ||
                          (mean == best_mean && cell < best_key);
      if (!found || better) {
        found = true;
        best_mean = mean;
        best_key = cell;
        best.lr = std::get<0>(cell);
        best.clip = std::get<1>(cell);
        best.epochs = std::get<2>(cell);
        best.alpha_k = std::get<3>(cell);
        best.trials = static_cast<int>(losses.size());
        best.mean_loss = mean;
        if (losses.size() >= 2) {
          double var = 0.0;
          for (double v : losses) var += (v - mean) * (v - mean);
          var /= static_cast<double>(losses.size() - 1);
          boost::math::students_t_distribution<double> dist(
              static_cast<double>(losses.size() - 1));
          best.ci_half_width = boost::math::quantile(dist, 0.975) *
                               std::sqrt(var / static_cast<double>(losses.size()));
        } else {
          best.ci_half_width = 0.0;
        }
      }
    }
    best.algorithm = key.first;
    best.p = key.second;
    rows.push_back(best);
  }
  return rows;
}

void write_records_csv(const std::string& path, const std::vector<TrialRecord>& records) {
  std::ofstream out = open_for_write(path);
  out << "# format_version=1\n" << kRecordsHeader << "\n";
  for (const TrialRecord& rec : records) {
    out << rec.algorithm << ',' << rec.p << ',' << format_double(rec.lr) << ','
        << format_double(rec.clip) << ',' << rec.epochs << ',' << rec.alpha_k << ','
        << rec.trial << ',' << rec.seed << ',' << format_double(rec.sigma) << ','
        << format_double(rec.final_train_loss) << ','
        << format_double(rec.final_reported_loss) << ',' << rec.wall_ms << ','
        << rec.status << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<TrialRecord> read_records_csv(const std::string& path) {
  std::ifstream in = open_for_read(path);
  std::string line;
  bool saw_header = false;
  std::vector<TrialRecord> records;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line != kRecordsHeader) {
        throw std::runtime_error(path + ": unexpected CSV header");
      }
      saw_header = true;
      continue;
    }
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 13) throw std::runtime_error(path + ": malformed row: " + line);
    TrialRecord rec;
    rec.algorithm = f[0];
    rec.p = static_cast<int>(parse_int(f[1]));
    rec.lr = parse_double(f[2]);
    rec.clip = parse_double(f[3]);
    rec.epochs = static_cast<int>(parse_int(f[4]));
    rec.alpha_k = static_cast<int>(parse_int(f[5]));
    rec.trial = static_cast<int>(parse_int(f[6]));
    rec.seed = parse_uint(f[7]);
    rec.sigma = parse_double(f[8]);
    rec.final_train_loss = parse_double(f[9]);
    rec.final_reported_loss = parse_double(f[10]);
    rec.wall_ms = parse_int(f[11]);
    rec.status = f[12];
    records.push_back(std::move(rec));
  }
  if (!saw_header) throw std::runtime_error(path + ": missing CSV header");
  return records;
}

std::string format_summary(const std::vector<SummaryRow>& rows) {
  std::string out = "algorithm,p,lr,clip,epochs,alpha_K,trials,mean_loss,ci_half_width\n";
  for (const SummaryRow& row : rows) {
    out += row.algorithm;
    out += ',';
    out += std::to_string(row.p);
    out += ',';
    out += format_double(row.lr);
    out += ',';
    out += format_double(row.clip);
    out += ',';
    out += std::to_string(row.epochs);
    out += ',';
    out += std::to_string(row.alpha_k);
    out += ',';
    out += std::to_string(row.trials);
    out += ',';
    out += format_double(row.mean_loss);
    out += ',';
    out += format_double(row.ci_half_width);
    out += '\n';
  }
  return out;
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out = open_for_write(path);
  out << "# format_version=1\n" << format_summary(rows);
  if (!out) throw std::runtime_error("failed writing " + path);
}

void write_dataset_csv(const std::string& path, const RegressionDataset& data) {
  data.validate();
  std::ofstream out = open_for_write(path);
  for (Eigen::Index j = 0; j < data.dim(); ++j) out << 'x' << '_' << j << ',';
  out << "y\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      out << format_double(data.features(i, j)) << ',';
    }
    out << format_double(data.responses[i]) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

RegressionDataset read_dataset_csv(const std::string& path, Visibility visibility) {
  std::ifstream in = open_for_read(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 2 || header.back() != "y") {
    throw std::runtime_error(path + ": expected header x_0..x_{p-1},y");
  }
  const Eigen::Index p = static_cast<Eigen::Index>(header.size()) - 1;

  std::vector<double> values;
  Eigen::Index n = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (static_cast<Eigen::Index>(f.size()) != p + 1) {
      throw std::runtime_error(path + ": malformed row: " + line);
    }
    for (const std::string& field : f) values.push_back(parse_double(field));
    ++n;
  }
  if (n == 0) throw std::runtime_error(path + ": no data rows");

  RegressionDataset data;
  data.features.resize(n, p);
  data.responses.resize(n);
  data.visibility = visibility;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) data.features(i, j) = values[i * (p + 1) + j];
    data.responses[i] = values[i * (p + 1) + p];
  }
  return data;
}

void write_stability_csv(const std::string& path,
                         const std::vector<StabilityReport>& reports) {
  std::ofstream out = open_for_write(path);
  out << "# format_version=1\n";
  out << "direction_id,analytic,mc,samples,rel_err\n";
  for (const StabilityReport& r : reports) {
    out << r.direction_id << ',' << format_double(r.analytic) << ','
        << format_double(r.monte_carlo) << ',' << r.samples << ','
        << format_double(r.relative_error) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

void write_fed_rounds_csv(const std::string& path,
                          const std::vector<FedRoundRecord>& rounds) {
  std::ofstream out = open_for_write(path);
  out << "# format_version=1\n";
  out << "round,train_loss,eval_loss,alpha,sigma\n";
  for (const FedRoundRecord& r : rounds) {
    out << r.round << ',' << format_double(r.train_loss) << ','
        << format_double(r.eval_loss) << ',' << format_double(r.alpha) << ','
        << format_double(r.sigma) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

ExperimentSpec load_experiment_spec(const std::string& path) {
  std::ifstream in = open_for_read(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": invalid JSON: " + e.what());
  }

  ExperimentSpec spec;
  if (j.value("format_version", 1) != 1) {
    throw std::runtime_error(path + ": unsupported format_version");
  }
  spec.base_seed = j.value("base_seed", spec.base_seed);
  spec.output_path = j.value("output", spec.output_path);
  spec.trials = j.value("trials", spec.trials);
  spec.eval_samples = j.value("eval_samples", spec.eval_samples);
  spec.workers = j.value("workers", spec.workers);
  spec.timing = j.value("timing", spec.timing);

  if (j.contains("dimensions")) spec.dimensions = j["dimensions"].get<std::vector<int>>();
  if (j.contains("algorithms")) {
    spec.algorithms.clear();
    for (const auto& name : j["algorithms"]) {
      const auto alg = parse_algorithm(name.get<std::string>());
      if (!alg) throw std::runtime_error(path + ": unknown algorithm '" +
                                         name.get<std::string>() + "'");
      spec.algorithms.push_back(*alg);
    }
  }
  if (j.contains("privacy")) {
    const auto& privacy = j["privacy"];
    if (privacy.contains("noise_multiplier")) {
      spec.noise_multiplier = privacy["noise_multiplier"].get<double>();
    }
    spec.epsilon = privacy.value("epsilon", spec.epsilon);
    spec.delta = privacy.value("delta", spec.delta);
  }
  if (j.contains("grid")) {
    const auto& grid = j["grid"];
    if (grid.contains("learning_rates")) {
      spec.grid.learning_rates = grid["learning_rates"].get<std::vector<double>>();
    }
    if (grid.contains("clip_norms")) {
      spec.grid.clip_norms = grid["clip_norms"].get<std::vector<double>>();
    }
    if (grid.contains("epochs")) {
      spec.grid.epochs = grid["epochs"].get<std::vector<int>>();
    }
    if (grid.contains("alpha_horizons")) {
      spec.grid.alpha_horizons = grid["alpha_horizons"].get<std::vector<int>>();
    }
  }
  if (j.contains("synth")) {
    const auto& synth = j["synth"];
    spec.synth.n_private = synth.value("n_private", spec.synth.n_private);
    spec.synth.public_multiplier =
        synth.value("public_multiplier", spec.synth.public_multiplier);
    spec.synth.noise_variance = synth.value("noise_variance", spec.synth.noise_variance);
    spec.synth.nnz_first_block = synth.value("nnz_first_block", spec.synth.nnz_first_block);
    spec.synth.nnz_last_block = synth.value("nnz_last_block", spec.synth.nnz_last_block);
    spec.synth.feature_value = synth.value("feature_value", spec.synth.feature_value);
  }
  if (j.contains("ridge")) {
    const auto& ridge = j["ridge"];
    spec.warm_start_gamma_scale =
        ridge.value("warm_start_scale", spec.warm_start_gamma_scale);
    spec.mirror_gamma_scale = ridge.value("mirror_scale", spec.mirror_gamma_scale);
  }
  return spec;
}

std::string resolve_output_path(const std::string& path) {
  const char* dir = std::getenv("DPMD_OUTPUT_DIR");
  if (dir == nullptr || *dir == '\0' || path.empty() || path.front() == '/') {
    return path;
  }
  std::string out(dir);
  if (out.back() != '/') out += '/';
  return out + path;
}

}  // namespace dpmd
