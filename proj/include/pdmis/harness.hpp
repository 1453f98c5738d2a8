#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pdmis/density.hpp"
#include "pdmis/estimator.hpp"

namespace pdmis {

/// Settings of the Gaussian-mixture benchmark. The defaults are the full-scale
/// run: 4096 proposals with sigma = 5, means uniform on
/// [-20, 20]^2, P = 4096, 2048, ..., 1, 500 runs.
struct ExperimentConfig {
  std::size_t n_proposals = 4096;
  double sigma = 5.0;
  double box_lo = -20.0;
  double box_hi = 20.0;
  /// Empty means "N, N/2, ..., 1" (see default_p_values).
  std::vector<std::size_t> p_values;
  std::size_t n_runs = 500;
  std::uint64_t seed = 1;
  std::size_t dim = 2;
  std::string output_path = "results.csv";
  /// Optional outputs of `sweep`.
  std::string plot_path;
  std::string svg_path;
  /// Draw the proposal means once and reuse them in every run.
  bool fixed_means = false;
  /// Replication threads; 0 picks the hardware concurrency.
  unsigned workers = 0;
  /// select-p stopping threshold.
  double threshold = 0.01;
  /// variance-check replications.
  std::size_t reps = 2000;

  /// p_values, or the default halving schedule when empty.
  std::vector<std::size_t> resolved_p_values() const;
};

/// N, floor(N/2), floor(N/4), ..., 1.
std::vector<std::size_t> default_p_values(std::size_t n);

/// Throws InvalidConfig naming the violated invariant.
void validate_config(const ExperimentConfig& cfg);

/// (key, value) pairs; keys use the long flag names without dashes, e.g.
/// {"runs", "10"}.
using Settings = std::vector<std::pair<std::string, std::string>>;

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
/// Throws ParseError with the offending line number.
Settings parse_config_text(std::string_view text);

/// defaults <- file settings <- flag settings, then validation. The `quick`
/// preset (N = 1024, 200 runs) is applied before any explicit value, so
/// explicit keys still win. Unknown keys and malformed values raise
/// ParseError naming the key; invariant violations raise InvalidConfig.
ExperimentConfig load_config(const Settings& file, const Settings& flags);

/// Reads `path` (may be empty for "no file") and merges as above. Throws
/// IoError if the file cannot be read.
ExperimentConfig load_config_file(const std::string& path, const Settings& flags);

/// Proposals and one sample from each, for one replication.
struct Realization {
  std::vector<Gaussian> proposals;
  std::vector<Point> samples;
};

Realization make_realization(const ExperimentConfig& cfg, std::size_t run_index);

/// Stream for the random partition with number `p_slot` (position in the P
/// schedule) of run `run_index`.
RandomStream partition_stream(const ExperimentConfig& cfg, std::size_t run_index,
                              std::size_t p_slot);

struct RunEstimate {
  std::size_t p = 0;
  Eigen::VectorXd moment;
  double z_hat = 0.0;
  std::uint64_t evals = 0;
};

/// One replication: draws proposals and samples from streams derived from
/// (seed, run_index), then weights the same samples under a random-blocks
/// partition for every P. Result order follows the P schedule.
std::vector<RunEstimate> run_replication(const ExperimentConfig& cfg, std::size_t run_index);

struct ResultRow {
  std::size_t p = 0;
  /// N / P when P divides N.
  std::optional<std::size_t> m_nominal;
  double mse_mean = 0.0;
  double mse_z = 0.0;
  std::uint64_t evals = 0;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

/// Consistency of the hard-coded ground truth with the average full-DM
/// estimate over all runs.
struct TruthCheck {
  Eigen::VectorXd mean_estimate;
  Eigen::VectorXd mean_stderr;
  double z_estimate = 0.0;
  double z_stderr = 0.0;
  /// Every component within 4 standard errors of the truth.
  bool consistent = false;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  /// Present when P = 1 is in the schedule and there are at least two runs.
  std::optional<TruthCheck> truth_check;
};

/// Runs every replication (in parallel when cfg.workers allows) and reduces
/// in run order, so the result does not depend on the worker count.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// CSV with header `P,M,mse_mean,mse_z,evaluations`. Throws IoError.
void write_csv(const std::vector<ResultRow>& rows, const std::string& path);
std::string format_csv(const std::vector<ResultRow>& rows);
/// Inverse of format_csv. Throws ParseError.
std::vector<ResultRow> parse_csv(std::string_view text);
std::vector<ResultRow> read_csv(const std::string& path);

/// Two columns `evaluations mse_mean`, sorted by evaluations. When
/// `svg_path` is non-empty also renders a log-log SVG chart. Throws IoError,
/// or InvalidSize for empty input.
void write_plot_data(const std::vector<ResultRow>& rows, const std::string& path,
                     const std::string& svg_path = {});
std::string render_svg(const std::vector<ResultRow>& rows);

/// Runs the number-of-mixtures heuristic on realization 0 of `cfg`.
SelectionResult run_selection(const ExperimentConfig& cfg);

/// Fixed one-dimensional problem used to compare the three weighting schemes
/// on identical samples: normalized two-component target, eight Gaussian
/// proposals, and nested contiguous partitions with P = 8, 4, 2, 1.
struct VarianceCheckProblem {
  Mixture target;
  std::vector<Gaussian> proposals;
  std::vector<std::size_t> p_values;
};

VarianceCheckProblem variance_check_problem();

struct VarianceCheckResult {
  std::vector<std::size_t> p_values;
  /// Sample variance over replications of the unnormalized estimate of E[X].
  std::vector<double> var_mean;
  /// Same for Z.
  std::vector<double> var_z;
  std::size_t reps = 0;
};

/// `reps` paired replications: fresh samples each time, weighted under every
/// partition of the problem.
VarianceCheckResult run_variance_check(std::size_t reps, std::uint64_t seed);

/// Variances listed in decreasing-P order must not grow by more than a
/// factor (1 + slack) from one entry to the next.
bool variance_ordered(const std::vector<double>& var_by_decreasing_p, double slack);

}  // namespace pdmis
