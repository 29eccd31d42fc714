#include "ctos/ordersel.hpp"

#include <cmath>
#include <limits>

#include "ctos/error.hpp"
#include "ctos/learner.hpp"
#include "ctos/random.hpp"
#include "io.hpp"

namespace ctos {

void ProbeConfig::validate() const {
  auto bad = [](const char* field, const char* why) {
    fail(ErrorKind::Config, std::string("invalid field 'probe.") + field + "': " + why);
  };
  if (samples_per_class < 1) bad("samples_per_class", "must be >= 1");
  if (epochs < 1) bad("epochs", "must be >= 1");
  if (hidden < 1) bad("hidden", "must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad("learning_rate", "must be finite and >= 0");
  if (minibatch < 1) bad("minibatch", "must be >= 1");
}

void ScoreMatrix::validate() const {
  const auto n = static_cast<Eigen::Index>(task_ids.size());
  if (n < 1 || scores.rows() != n || scores.cols() != n) fail(ErrorKind::Dimension, "score matrix must be square and non-empty");
  for (Eigen::Index t = 0; t < n; ++t)
    for (Eigen::Index i = 0; i < n; ++i)
      if (t != i && !std::isfinite(scores(t, i))) fail(ErrorKind::Input, "score matrix has a non-finite entry");
}

ScoreMatrix pairwise_score_matrix(const TaskBatch& batch, const Scorer& scorer, const ProbeConfig& probe) {
  probe.validate();
  batch.validate();
  const auto n = static_cast<Eigen::Index>(batch.tasks.size());
  if (n < 2) fail(ErrorKind::Selection, "pairwise scoring needs at least 2 tasks");
  ScoreMatrix out;
  out.scores = Matrix::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  for (const auto& t : batch.tasks) out.task_ids.push_back(t.task_id);

  for (Eigen::Index t = 0; t < n; ++t) {
    const Task& source = batch.tasks[static_cast<std::size_t>(t)];
    const auto task_seed = derive_seed(probe.seed, {static_cast<std::uint64_t>(source.task_id)});
    Task subset;
    subset.task_id = source.task_id;
    subset.train = subsample_per_class(source.train, probe.samples_per_class, derive_seed(task_seed, {1}));

    TrainHyper hyper;
    hyper.learning_rate = probe.learning_rate;
    hyper.epochs = probe.epochs;
    hyper.minibatch = probe.minibatch;
    hyper.strategy = Strategy::Naive;
    hyper.seed = derive_seed(task_seed, {2});

    ContinualModel model;
    try {
      model = init_model(static_cast<int>(source.train.dim()), probe.hidden, derive_seed(task_seed, {3}));
      model = train_task(std::move(model), subset, hyper, ReplayBuffer(0)).model;
    } catch (const TrainingDivergence& e) {
      fail(ErrorKind::Selection, "probe training for task " + std::to_string(source.task_id) + " failed: " + e.what());
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == t) continue;
      const double v = scorer(model, batch.tasks[static_cast<std::size_t>(i)].train, source.task_id);
      if (!std::isfinite(v))
        fail(ErrorKind::Selection, "non-finite score from task " + std::to_string(source.task_id) + " to task " +
                                       std::to_string(batch.tasks[static_cast<std::size_t>(i)].task_id));
      out.scores(t, i) = v;
    }
  }
  return out;
}

OrderSelection greedy_order(const ScoreMatrix& scores) {
  scores.validate();
  const auto n = static_cast<int>(scores.size());
  OrderSelection sel;
  sel.scores = scores;
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  for (int step = 0; step < n; ++step) {
    SelectionStep record;
    int best = -1;
    double best_total = 0.0;
    for (int t = 0; t < n; ++t) {
      if (taken[static_cast<std::size_t>(t)]) continue;
      double total = 0.0;
      for (int j = 0; j < n; ++j)
        if (j != t && !taken[static_cast<std::size_t>(j)]) total += scores.scores(t, j);
      record.candidates.push_back(t);
      record.totals.push_back(total);
      if (best < 0 || total < best_total) {
        best = t;
        best_total = total;
      }
    }
    record.chosen = best;
    if (record.candidates.size() > 1) sel.steps.push_back(std::move(record));
    taken[static_cast<std::size_t>(best)] = true;
    sel.order.push_back(best);
    sel.task_ids.push_back(scores.task_ids[static_cast<std::size_t>(best)]);
  }
  return sel;
}

std::vector<OrderSelection> hctos_multibatch(std::span<const TaskBatch> batches, const Scorer& scorer,
                                             MetricId metric, const ProbeConfig& probe) {
  if (batches.empty()) fail(ErrorKind::Selection, "no batches to order");
  std::vector<OrderSelection> out;
  for (const auto& batch : batches) {
    OrderSelection sel;
    if (batch.tasks.size() == 1) {
      ScoreMatrix single{Matrix::Constant(1, 1, std::numeric_limits<double>::quiet_NaN()), {batch.tasks[0].task_id}};
      sel = greedy_order(single);
    } else {
      sel = greedy_order(pairwise_score_matrix(batch, scorer, probe));
    }
    sel.probe = probe;
    sel.metric = metric;
    out.push_back(std::move(sel));
  }
  return out;
}

std::string format_score_csv(const ScoreMatrix& scores) {
  std::string out = "t,i,score\n";
  const auto n = static_cast<Eigen::Index>(scores.size());
  for (Eigen::Index t = 0; t < n; ++t)
    for (Eigen::Index i = 0; i < n; ++i) {
      if (t == i) continue;
      out += std::to_string(scores.task_ids[static_cast<std::size_t>(t)]) + "," +
             std::to_string(scores.task_ids[static_cast<std::size_t>(i)]) + "," + io::format_double(scores.scores(t, i)) +
             "\n";
    }
  return out;
}

}  // namespace ctos
