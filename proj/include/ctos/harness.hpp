#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctos/dataset.hpp"
#include "ctos/learner.hpp"
#include "ctos/metrics.hpp"
#include "ctos/ordersel.hpp"
#include "ctos/seqtrans.hpp"

namespace ctos {

inline constexpr const char* kVersion = "0.1.0";

/// Replay capacities used when a config names a preset instead of a list.
inline const std::vector<std::size_t> kDeskBufferPreset = {90, 225, 450, 900};
inline const std::vector<std::size_t> kFullBufferPreset = {360, 900, 1800, 3600};

struct ExperimentConfig {
  std::optional<SuiteConfig> suite;
  std::filesystem::path manifest;
  /// Splits a generated suite into consecutive batches; empty means one batch.
  std::vector<int> batch_sizes;
  std::vector<Strategy> strategies = {Strategy::ER};
  std::vector<std::size_t> buffer_capacities = kDeskBufferPreset;
  MetricOptions metric;
  int random_order_count = 20;
  ProbeConfig probe;
  /// strategy and seed are filled per run; replay_minibatch applies to ER and A-GEM.
  TrainHyper hyper{0.03, 20, 32, 32, Strategy::ER, 0};
  int hidden = 32;
  std::uint64_t master_seed = 0;
  std::filesystem::path output_dir;
  unsigned threads = 1;
  bool write_traces = false;
  /// Adds wall-clock seconds to summary.json, which makes outputs non-reproducible.
  bool record_timing = false;
  /// Enumerate every order in `compare` when the product of batch factorials is <= 120.
  bool brute_force = false;

  void validate() const;
  TrainHyper hyper_for(Strategy strategy, std::uint64_t seed) const;
};

/// Parses the JSON config schema; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& doc);
/// Canonical JSON form. `output_dir` and `threads` are omitted because they do not affect results.
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Builds the batches a config describes (generated or from a manifest).
std::vector<TaskBatch> materialize_batches(const ExperimentConfig& config);

/// Uniform random permutations of 0..n_tasks-1, drawn with replacement.
std::vector<std::vector<int>> sample_random_orders(int n_tasks, int count, std::uint64_t seed);

/// Seed of one sweep run; independent of loop nesting.
std::uint64_t run_seed(std::uint64_t master_seed, Strategy strategy, std::size_t buffer, int order_index);

struct RunRecord {
  int run_id = 0;
  Strategy strategy = Strategy::ER;
  std::size_t buffer = 0;
  int order_index = 0;
  std::vector<int> order;  // task ids
  std::optional<SequenceReport> report;
  std::vector<TaskTrace> traces;
  std::string error;  // set when the run failed
};

struct CorrelationRow {
  Strategy strategy = Strategy::ER;
  std::size_t buffer = 0;
  MetricId metric = MetricId::LogME;
  int run_count = 0;
  /// Empty when the inputs are degenerate (fewer than 3 runs or zero variance).
  std::optional<Correlation> aa_tft;
  std::optional<Correlation> aa_trt;
};

struct ExperimentResult {
  std::vector<RunRecord> runs;
  std::vector<CorrelationRow> correlations;
};

/// Pearson(AA, TFT) and Pearson(AA, TRT) per (strategy, buffer) over successful runs.
std::vector<CorrelationRow> correlate_runs(std::span<const RunRecord> runs, MetricId metric);

/// Runs every (strategy, buffer, order) combination. `scorer` overrides the
/// configured metric when given.
ExperimentResult run_experiment(const ExperimentConfig& config, const Scorer* scorer = nullptr);

struct ArmResult {
  std::vector<int> order;  // task ids across all batches
  double aa = 0.0;
};

struct BruteForceSpan {
  std::size_t order_count = 0;
  double min_aa = 0.0;
  double max_aa = 0.0;
  std::vector<int> best_order;
};

struct ComparisonReport {
  Strategy strategy = Strategy::ER;
  std::size_t buffer = 0;
  MetricId metric = MetricId::LogME;
  std::vector<OrderSelection> selections;
  ArmResult hctos;
  std::vector<ArmResult> random;
  double random_mean = 0.0;
  double random_std = 0.0;
  bool hctos_wins = false;
  std::optional<BruteForceSpan> brute_force;
};

/// AA of the HCTOS order against `random_order_count` random per-batch orders,
/// using the first configured strategy and buffer. Every arm shares one run
/// seed so AA depends on the order alone.
ComparisonReport compare_hctos_random(const ExperimentConfig& config, std::span<const TaskBatch> batches,
                                      const Scorer* scorer = nullptr);

/// Average accuracy of one concatenated order under the comparison seed.
double order_accuracy(const ExperimentConfig& config, std::span<const TaskBatch> batches,
                      std::span<const int> task_order, Strategy strategy, std::size_t buffer);

// ---- report files ----

std::string format_order(std::span<const int> order);
std::vector<int> parse_order(std::string_view text);

/// Writes reports.csv, acc_matrix.csv, transfer_terms.csv, correlation.csv,
/// failures.csv, optional traces/ and summary.json. Returns the written file names.
std::vector<std::string> emit(const ExperimentResult& result, const ExperimentConfig& config,
                              const std::filesystem::path& dir, std::optional<double> wall_clock = {});
std::vector<std::string> emit_comparison(const ComparisonReport& report, const ExperimentConfig& config,
                                         const std::filesystem::path& dir, std::optional<double> wall_clock = {});
/// order.json plus scores_batch<k>.csv per batch.
std::vector<std::string> emit_selection(std::span<const OrderSelection> selections, const std::filesystem::path& dir);

/// Reads reports.csv and acc_matrix.csv back into run records.
std::vector<RunRecord> load_reports(const std::filesystem::path& dir, MetricId* metric = nullptr);
std::string format_correlation_csv(std::span<const CorrelationRow> rows);

std::uint64_t fnv1a64(std::string_view text) noexcept;

}  // namespace ctos
