#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctos/dataset.hpp"

namespace ctos {

/// Affine layer y = x * weight + bias, weight shaped (in x out).
struct Dense {
  Matrix weight;
  Vector bias;

  Eigen::Index in() const noexcept { return weight.rows(); }
  Eigen::Index out() const noexcept { return weight.cols(); }
  bool operator==(const Dense& o) const {
    return weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() &&
           weight == o.weight && bias == o.bias;
  }
};

/// Shared tanh trunk (d -> h -> h) with one linear head per task.
struct ContinualModel {
  Dense layer1;
  Dense layer2;
  std::map<int, Dense> heads;
  std::uint64_t rng_seed = 0;
  /// Id of the most recently trained task, if any.
  std::optional<int> last_task;

  Eigen::Index input_dim() const noexcept { return layer1.in(); }
  Eigen::Index hidden() const noexcept { return layer1.out(); }
  bool has_head(int task_id) const { return heads.contains(task_id); }
  bool all_finite() const;
  bool operator==(const ContinualModel&) const = default;
};

ContinualModel init_model(int input_dim, int hidden, std::uint64_t seed);

/// Post-tanh activations of the last trunk layer, n x h.
Matrix forward_features(const ContinualModel& model, const Matrix& inputs);
Matrix head_logits(const ContinualModel& model, const Matrix& inputs, int task_id);
/// Row-wise softmax of a task head; rows sum to one.
Matrix head_probabilities(const ContinualModel& model, const Matrix& inputs, int task_id);
/// Argmax of the head's logits, lowest class id on ties.
std::vector<int> predict(const ContinualModel& model, const Matrix& inputs, int task_id);

// ---- gradients ----

struct ModelGradient {
  Dense layer1;
  Dense layer2;
  std::map<int, Dense> heads;

  static ModelGradient zeros_like(const ContinualModel& model);
};

/// Mean cross-entropy of `task_id`'s head on (inputs, labels).
double mean_cross_entropy(const ContinualModel& model, const Matrix& inputs,
                          std::span<const int> labels, int task_id);

/// Adds weight * d(mean cross-entropy)/d(params) into `grad` and returns the loss.
double accumulate_gradient(const ContinualModel& model, const Matrix& inputs,
                           std::span<const int> labels, int task_id, double weight,
                           ModelGradient& grad);

/// Trunk followed by one head, flattened in a fixed order (weights column-major, then bias).
Vector flatten_trunk_head(const ModelGradient& grad, int task_id);
void unflatten_trunk_head(const Vector& flat, int task_id, ModelGradient& grad);
Vector flatten_trunk_head(const ContinualModel& model, int task_id);
void unflatten_trunk_head(const Vector& flat, int task_id, ContinualModel& model);

/// A-GEM projection: g unchanged when g . g_ref >= 0, otherwise its component
/// along g_ref is removed.
Vector agem_project(const Vector& g, const Vector& g_ref);

// ---- replay memory ----

struct ReplaySample {
  Vector input;
  int label = 0;
  int task_id = 0;
  bool operator==(const ReplaySample& o) const {
    return label == o.label && task_id == o.task_id && input.size() == o.input.size() &&
           input == o.input;
  }
};

struct ReplayBuffer {
  std::size_t capacity = 0;
  std::vector<ReplaySample> slots;
  std::uint64_t seen_count = 0;

  explicit ReplayBuffer(std::size_t cap = 0) : capacity(cap) {}
  bool empty() const noexcept { return slots.empty(); }
  bool operator==(const ReplayBuffer&) const = default;
};

/// Classic reservoir sampling over the cumulative stream.
ReplayBuffer buffer_insert_reservoir(ReplayBuffer buffer, std::span<const ReplaySample> rows,
                                     std::uint64_t seed);

// ---- training ----

enum class Strategy { Naive, ER, AGEM };

const char* to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view text);

struct TrainHyper {
  double learning_rate = 0.03;
  int epochs = 20;
  int minibatch = 32;
  int replay_minibatch = 0;
  Strategy strategy = Strategy::Naive;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  ContinualModel model;
  ReplayBuffer buffer;
  /// Mean current-task loss per epoch.
  std::vector<double> epoch_losses;
};

TrainResult train_task(ContinualModel model, const Task& task, const TrainHyper& hyper,
                       ReplayBuffer buffer);

struct TaskTrace {
  int task_id = 0;
  std::vector<double> epoch_losses;
};

/// Model states after each task of an ordered sequence.
struct ContinualRun {
  std::vector<ContinualModel> snapshots;
  std::vector<TaskTrace> traces;
};

/// Trains a fresh model (seeded from hyper.seed) over `tasks` in the given order.
ContinualRun run_continual(std::span<const Task> tasks, const TrainHyper& hyper,
                           std::size_t buffer_capacity, int hidden);

/// `task_id,epoch,mean_loss` rows.
std::string format_trace_csv(std::span<const TaskTrace> traces);

}  // namespace ctos
