#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ctos {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense features with task-local class ids in [0, class_count).
struct LabeledSet {
  Matrix inputs;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const noexcept { return labels.size(); }
  Eigen::Index dim() const noexcept { return inputs.cols(); }

  /// Throws Error(Input) when a structural invariant is broken.
  void validate() const;

  /// Rows with the given indices, in the given order.
  LabeledSet select(std::span<const std::size_t> rows) const;

  /// Row indices per class, ascending.
  std::vector<std::vector<std::size_t>> rows_by_class() const;

  bool operator==(const LabeledSet&) const;
};

struct Task {
  int task_id = 0;
  LabeledSet train;
  LabeledSet eval;
  /// Original label text per dense id; empty for generated tasks.
  std::vector<std::string> label_names;

  bool operator==(const Task&) const = default;
};

struct TaskBatch {
  int batch_id = 0;
  std::vector<Task> tasks;

  Eigen::Index dim() const;
  void validate() const;
  bool operator==(const TaskBatch&) const = default;
};

struct SuiteConfig {
  int task_count = 10;
  int classes_per_task = 3;
  int dim = 8;
  int samples_per_class = 40;
  double similarity = 0.5;
  double difficulty_spread = 1.0;
  double eval_fraction = 0.25;
  /// Half-width of the uniform box class means are drawn from.
  double mean_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Class means for (task, class) as produced by the generator; exposed so
/// callers can inspect task relatedness without reverse-engineering samples.
struct SuiteLayout {
  std::vector<std::vector<Vector>> class_means;  // [task][class]
  std::vector<double> task_sigma;
};

SuiteLayout synthetic_layout(const SuiteConfig& config);
TaskBatch generate_synthetic_suite(const SuiteConfig& config);

/// Splits a generated or loaded batch into consecutive batches of the given sizes.
std::vector<TaskBatch> partition_batches(const TaskBatch& batch, std::span<const int> sizes);

std::pair<LabeledSet, LabeledSet> split_train_eval(const LabeledSet& set, double eval_fraction,
                                                   std::uint64_t seed);

LabeledSet subsample_per_class(const LabeledSet& set, int k, std::uint64_t seed);

// ---- CSV task files and suite manifests ----

struct CsvLoadOptions {
  double eval_fraction = 0.25;  // applied to rows with an empty split field
  std::uint64_t seed = 0;
};

void write_task_csv(const Task& task, const std::filesystem::path& path);
Task read_task_csv(const std::filesystem::path& path, int task_id, const CsvLoadOptions& options);

/// One task per file; task ids follow list position.
TaskBatch load_csv_tasks(std::span<const std::filesystem::path> paths,
                         const CsvLoadOptions& options = {});

/// Writes task CSVs plus `manifest.json` into `dir`. Returns the manifest path.
std::filesystem::path write_suite(std::span<const TaskBatch> batches,
                                  const std::filesystem::path& dir);
std::vector<TaskBatch> load_manifest(const std::filesystem::path& manifest,
                                     const CsvLoadOptions& options = {});

}  // namespace ctos
