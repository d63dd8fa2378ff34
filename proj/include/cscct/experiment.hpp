#pragma once

// Experiment driver: builds the stream, runs the phase loop for every
// seed, writes matrices / checkpoints / logs under the output directory,
// and aggregates the per-seed metrics into a summary that compare can
// consume.

#include <optional>
#include <string>
#include <vector>

#include "cscct/config.hpp"
#include "cscct/metrics.hpp"

namespace cscct {

struct SeedResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double avg_incremental_accuracy = 0.0;
  double apt_value = 0.0;  // NaN when the stream has a single task
  double act_value = 0.0;
  std::string matrix_csv;
  std::string train_log;
  std::vector<std::string> checkpoints;
  std::vector<std::string> embeddings;
};

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation across seeds
};

struct RunSummary {
  std::string preset;
  std::string config_hash;
  std::string dataset_desc;
  std::string classifier;
  StreamProtocol protocol;
  int num_tasks = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<SeedResult> results;
  Aggregate avg_incremental_accuracy;
  Aggregate apt_value;
  Aggregate act_value;
  double wall_clock_seconds = 0.0;
  std::string summary_path;

  bool any_failed() const;
};

struct RunOptions {
  bool force = false;
  int parallel = 1;
  bool emit_embeddings = false;  // in addition to the config flag
  std::optional<std::vector<std::uint64_t>> seed_override;
  std::optional<std::string> output_override;
};

/// Runs every seed (optionally in parallel workers), writes all artifacts
/// plus `summary.txt` under the output directory, and returns the summary.
/// Refuses to reuse a non-empty output directory unless `force` is set.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

void write_summary(const std::string& path, const RunSummary& summary);
RunSummary read_summary(const std::string& path);

struct ComparisonRow {
  std::string preset;
  std::string source;
  Aggregate avg, apt, act;
  bool best_avg = false, best_apt = false, best_act = false;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

/// Requires compatible protocols (same variant, task sizes, task count,
/// and dataset). Best-per-column is the highest mean; ties keep the
/// earliest input.
ComparisonTable compare_runs(const std::vector<RunSummary>& summaries);

std::string comparison_text(const ComparisonTable& table);
std::string comparison_csv(const ComparisonTable& table);

/// Resolves the effective output directory: explicit override, else the
/// config value; relative paths are joined under $CSCCT_OUTPUT_ROOT when
/// that variable is set.
std::string resolve_output_dir(const ExperimentConfig& config, const RunOptions& options);

}  // namespace cscct
