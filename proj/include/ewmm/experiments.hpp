#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ewmm/data.hpp"
#include "ewmm/engine.hpp"

namespace ewmm {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentKind { covariance, quantile, logistic, bench };

std::string_view to_string(ExperimentKind k);
ExperimentKind experiment_from_string(std::string_view s);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::covariance;
  std::string model;                ///< bench: catalog id of the model preset
  double half_life = 63.0;
  int window = 100;                 ///< M
  int tail_window = 300;            ///< M_tail
  int probes = 0;                   ///< L; 0 picks the default
  std::vector<double> lambdas;      ///< covariance grid, or the single logistic/bench weight
  std::vector<double> levels;       ///< quantile levels
  TailMode tail_mode = TailMode::taylor;
  ProbeScale probe_scale = ProbeScale::norm_plus_epsilon;
  std::uint64_t seed = 0;
  std::int64_t steps = -1;          ///< stream length override; -1 keeps the generator default
  std::string input;                ///< CSV path; empty uses the generator
  bool percent_to_decimal = false;
  std::string out_dir = ".";
  bool compare = false;             ///< covariance: also run the naive strategy
  bool timing = true;               ///< false drops timing columns (golden files)
  int warmup = 20;
  int threads = 0;                  ///< sweep parallelism cap; 0 reads EWMM_THREADS
  SolverSettings solver;
  QuantileStreamSpec quantile_data;
  LogisticStreamSpec logistic_data;
  ReturnsStreamSpec returns_data;
};

/// Experiment presets: covariance H=63 and lambda in {2.5,5,7.5,10}; quantile
/// H=100, M=100, M_tail=300, L=10, fitted tail; logistic H=150, M=150,
/// lambda=0.5, taylor tail; bench ridge regression, T=1000.
ExperimentConfig default_config(ExperimentKind kind);

/// Overrides config fields present in the JSON document. Throws ConfigError.
void apply_json(ExperimentConfig& cfg, const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
/// Throws ConfigError when an invariant (H > 0, M >= 1, lambda >= 0, ...) fails.
void validate(const ExperimentConfig& cfg);

/// Per-step output row.
struct ExperimentRecord {
  std::int64_t t = 0;
  Vector theta;
  double objective = 0.0;
  double step_time_seconds = 0.0;
  double cumulative_time_seconds = 0.0;
  std::map<std::string, double> diagnostics;
};

/// One output file. Timing columns are listed separately so they can be
/// dropped for deterministic output.
struct Table {
  std::string name;                          ///< file stem
  std::string label_column;                  ///< optional string column after t (dates)
  std::vector<std::string> columns;          ///< first column is always t
  std::vector<bool> timing;                  ///< per column
  std::vector<std::string> labels;
  std::vector<std::vector<double>> rows;

  void add_column(std::string name, bool is_timing = false);
  std::size_t column(std::string_view name) const;
  std::vector<double> values(std::string_view name) const;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<Table> tables;
  nlohmann::json summary;  ///< deterministic summary statistics
  nlohmann::json timing_summary;
};

ExperimentResult run_covariance(const ExperimentConfig& cfg);
ExperimentResult run_quantile(const ExperimentConfig& cfg);
ExperimentResult run_logistic(const ExperimentConfig& cfg);
ExperimentResult run_bench(const ExperimentConfig& cfg);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Writes <name>.csv per table and manifest.json into cfg.out_dir.
/// Returns the written paths.
std::vector<std::string> write_outputs(const ExperimentResult& result);
void write_table(std::ostream& out, const Table& table, bool timing);

/// Least-squares slope of log(cumulative[t-1]) on log t for t in [first, last].
double loglog_slope(const std::vector<double>& cumulative, std::int64_t first, std::int64_t last);

/// sqrt(mean((a - b)^2)) and sqrt(mean(a^2)).
double rms_deviation(const std::vector<double>& a, const std::vector<double>& b);
double rms(const std::vector<double>& a);

/// Sweep parallelism: explicit value, else EWMM_THREADS, else hardware threads.
int sweep_threads(int requested);

}  // namespace ewmm
