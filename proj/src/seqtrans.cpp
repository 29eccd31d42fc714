#include "ctos/seqtrans.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "ctos/error.hpp"

namespace ctos {

namespace {

double mean_of(const std::vector<TransferTerm>& terms) {
  double s = 0.0;
  for (const auto& t : terms) s += t.score;
  return s / static_cast<double>(terms.size());
}

double checked(double v, const char* what) {
  if (!std::isfinite(v)) fail(ErrorKind::Input, std::string(what) + ": transferability score is not finite");
  return v;
}

}  // namespace

void SequenceRun::validate() const {
  if (tasks.size() < 2) fail(ErrorKind::Input, "sequence run needs at least 2 tasks");
  if (snapshots.size() != tasks.size() || order.size() != tasks.size())
    fail(ErrorKind::Input, "sequence run is incomplete");
}

SequenceRun make_sequence_run(std::vector<Task> tasks, const TrainHyper& hyper, std::size_t buffer_capacity,
                              int hidden) {
  SequenceRun run;
  for (const auto& t : tasks) run.order.push_back(t.task_id);
  auto trained = run_continual(tasks, hyper, buffer_capacity, hidden);
  run.tasks = std::move(tasks);
  run.snapshots = std::move(trained.snapshots);
  run.traces = std::move(trained.traces);
  run.strategy = hyper.strategy;
  run.buffer_capacity = buffer_capacity;
  run.seed = hyper.seed;
  return run;
}

double task_accuracy(const ContinualModel& model, const LabeledSet& set, int task_id) {
  if (set.size() == 0) fail(ErrorKind::Evaluation, "empty evaluation set for task " + std::to_string(task_id));
  const auto pred = predict(model, set.inputs, task_id);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == set.labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double average_accuracy(const ContinualModel& final_model, std::span<const Task> tasks) {
  if (tasks.empty()) fail(ErrorKind::Evaluation, "no tasks to evaluate");
  double s = 0.0;
  for (const auto& t : tasks) s += task_accuracy(final_model, t.eval, t.task_id);
  return s / static_cast<double>(tasks.size());
}

std::vector<TransferTerm> tft_terms(const SequenceRun& run, const Scorer& scorer) {
  run.validate();
  std::vector<TransferTerm> terms;
  for (std::size_t t = 1; t < run.length(); ++t) {
    const auto& source = run.snapshots[t - 1];
    const int head = run.tasks[t - 1].task_id;
    terms.push_back({run.tasks[t].task_id, head, checked(scorer(source, run.tasks[t].train, head), "tft")});
  }
  return terms;
}

std::vector<TransferTerm> trt_terms(const SequenceRun& run, const Scorer& scorer) {
  run.validate();
  const auto& final_model = run.snapshots.back();
  const int head = run.tasks.back().task_id;
  std::vector<TransferTerm> terms;
  for (std::size_t t = 0; t + 1 < run.length(); ++t)
    terms.push_back({run.tasks[t].task_id, head, checked(scorer(final_model, run.tasks[t].train, head), "trt")});
  return terms;
}

double tft(const SequenceRun& run, const Scorer& scorer) { return mean_of(tft_terms(run, scorer)); }
double trt(const SequenceRun& run, const Scorer& scorer) { return mean_of(trt_terms(run, scorer)); }
double tft(const SequenceRun& run, const MetricOptions& metric) { return tft(run, make_scorer(metric)); }
double trt(const SequenceRun& run, const MetricOptions& metric) { return trt(run, make_scorer(metric)); }

Correlation pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) fail(ErrorKind::Dimension, "pearson: vectors differ in length");
  if (xs.size() < 3) fail(ErrorKind::Input, "pearson: need at least 3 points");
  const auto n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) fail(ErrorKind::Input, "pearson: zero variance input");
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);

  Correlation out{r, 0.0};
  if (std::abs(r) < 1.0) {
    const double dof = n - 2.0;
    const double t = r * std::sqrt(dof / (1.0 - r * r));
    boost::math::students_t dist(dof);
    out.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return out;
}

SequenceReport sequence_report(const SequenceRun& run, const Scorer& scorer, MetricId metric) {
  run.validate();
  SequenceReport report;
  report.metric = metric;
  report.order = run.order;
  for (std::size_t t = 0; t < run.length(); ++t) {
    std::vector<double> row;
    for (std::size_t j = 0; j <= t; ++j)
      row.push_back(task_accuracy(run.snapshots[t], run.tasks[j].eval, run.tasks[j].task_id));
    report.acc_matrix.push_back(std::move(row));
  }
  report.aa = average_accuracy(run.snapshots.back(), run.tasks);
  report.tft_terms = tft_terms(run, scorer);
  report.trt_terms = trt_terms(run, scorer);
  report.tft = mean_of(report.tft_terms);
  report.trt = mean_of(report.trt_terms);
  return report;
}

SequenceReport sequence_report(const SequenceRun& run, const MetricOptions& metric) {
  return sequence_report(run, make_scorer(metric), metric.id);
}

}  // namespace ctos
