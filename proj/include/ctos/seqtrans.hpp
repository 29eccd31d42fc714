#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ctos/learner.hpp"
#include "ctos/metrics.hpp"

namespace ctos {

/// One continual-learning pass over an ordered task sequence.
struct SequenceRun {
  std::vector<int> order;  // task ids in training order
  std::vector<Task> tasks; // matching `order`
  std::vector<ContinualModel> snapshots;
  std::vector<TaskTrace> traces;
  Strategy strategy = Strategy::Naive;
  std::size_t buffer_capacity = 0;
  std::uint64_t seed = 0;

  std::size_t length() const noexcept { return tasks.size(); }
  void validate() const;
};

/// Trains over `tasks` in order and records every snapshot.
SequenceRun make_sequence_run(std::vector<Task> tasks, const TrainHyper& hyper,
                              std::size_t buffer_capacity, int hidden);

/// A single tr() evaluation inside TFT or TRT.
struct TransferTerm {
  int target_task = 0;
  int source_head = 0;
  double score = 0.0;
};

struct SequenceReport {
  double aa = 0.0;
  double tft = 0.0;
  double trt = 0.0;
  /// acc_matrix[t][j] for j <= t: accuracy of snapshot t on eval split of position j.
  std::vector<std::vector<double>> acc_matrix;
  std::vector<TransferTerm> tft_terms;
  std::vector<TransferTerm> trt_terms;
  MetricId metric = MetricId::LogME;
  std::vector<int> order;
};

/// Fraction of `set` rows predicted correctly by the task's head.
double task_accuracy(const ContinualModel& model, const LabeledSet& set, int task_id);
double average_accuracy(const ContinualModel& final_model, std::span<const Task> tasks);

std::vector<TransferTerm> tft_terms(const SequenceRun& run, const Scorer& scorer);
std::vector<TransferTerm> trt_terms(const SequenceRun& run, const Scorer& scorer);
double tft(const SequenceRun& run, const Scorer& scorer);
double trt(const SequenceRun& run, const Scorer& scorer);
double tft(const SequenceRun& run, const MetricOptions& metric);
double trt(const SequenceRun& run, const MetricOptions& metric);

struct Correlation {
  double r = 0.0;
  /// Two-sided p-value from Student's t with n-2 degrees of freedom.
  double p = 1.0;
};

/// Sample Pearson correlation. Throws Error(Input) on length mismatch, fewer
/// than 3 points, or zero variance.
Correlation pearson(std::span<const double> xs, std::span<const double> ys);

SequenceReport sequence_report(const SequenceRun& run, const Scorer& scorer, MetricId metric);
SequenceReport sequence_report(const SequenceRun& run, const MetricOptions& metric);

}  // namespace ctos
