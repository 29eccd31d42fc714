#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctos/dataset.hpp"
#include "ctos/metrics.hpp"

namespace ctos {

/// How the per-task probe ("simple model") is trained before scoring.
struct ProbeConfig {
  int samples_per_class = 20;
  int epochs = 10;
  int hidden = 16;
  double learning_rate = 0.03;
  int minibatch = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

/// a[t][i] = tr(probe_t, D_i), diagonal unused (NaN).
struct ScoreMatrix {
  Matrix scores;
  std::vector<int> task_ids;

  std::size_t size() const noexcept { return task_ids.size(); }
  void validate() const;
};

struct SelectionStep {
  std::vector<int> candidates;  // batch indices still unselected
  std::vector<double> totals;   // L_t per candidate
  int chosen = 0;
};

struct OrderSelection {
  std::vector<int> order;     // batch indices in selected order
  std::vector<int> task_ids;  // the same order as task ids
  /// One entry per comparison step; the final single-candidate step is not recorded.
  std::vector<SelectionStep> steps;
  ScoreMatrix scores;
  ProbeConfig probe;
  MetricId metric = MetricId::LogME;
};

/// Trains one probe per task (Naive, fresh init, seed derived from probe.seed
/// and the task id) on a per-class subsample of its training split and scores
/// it against every other task's training split.
ScoreMatrix pairwise_score_matrix(const TaskBatch& batch, const Scorer& scorer, const ProbeConfig& probe);

/// Repeatedly picks the unselected task with the smallest total score to the
/// remaining tasks; ties go to the lowest index.
OrderSelection greedy_order(const ScoreMatrix& scores);

std::vector<OrderSelection> hctos_multibatch(std::span<const TaskBatch> batches, const Scorer& scorer,
                                             MetricId metric, const ProbeConfig& probe);

/// `t,i,score` rows keyed by task id.
std::string format_score_csv(const ScoreMatrix& scores);

}  // namespace ctos
