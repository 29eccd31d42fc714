#pragma once

#include <functional>
#include <span>
#include <string_view>

#include "ctos/dataset.hpp"
#include "ctos/learner.hpp"

namespace ctos {

enum class MetricId { LogME, LEEP, TransRate, GBC };

const char* to_string(MetricId id) noexcept;
MetricId parse_metric(std::string_view text);

struct TransferScore {
  double value = 0.0;
  MetricId metric = MetricId::LogME;
};

struct MetricOptions {
  MetricId id = MetricId::LogME;
  double transrate_eps = 0.1;
};

/// Mean over classes of the maximised one-vs-rest Bayesian linear-regression
/// log evidence, divided by n. Maximisation is the MacKay fixed point on
/// (alpha, beta) in the SVD basis of `features`.
double logme(const Matrix& features, std::span<const int> labels);

/// Log evidence of targets under fixed prior precision alpha and noise precision beta.
double logme_evidence(const Matrix& features, const Vector& targets, double alpha, double beta);

/// Log expected empirical prediction from source-head probabilities (n x Z).
double leep(const Matrix& source_probs, std::span<const int> labels);

/// Coding-rate gap R(Z) - sum_c (n_c/n) R(Z_c) on centred features.
double transrate(const Matrix& features, std::span<const int> labels, double eps = 0.1);

/// Negative sum of pairwise Bhattacharyya coefficients between per-class
/// diagonal Gaussians (variance floor 1e-6).
double gbc(const Matrix& features, std::span<const int> labels);

/// tr(model, target): how well `model` is expected to transfer to `target`.
/// `source_task_id` selects the head LEEP reads probabilities from.
using Scorer = std::function<double(const ContinualModel& model, const LabeledSet& target, int source_task_id)>;

Scorer make_scorer(const MetricOptions& options);
/// Ignores its arguments; used for dispatch and aggregation tests.
Scorer constant_scorer(double value);

TransferScore tr(const MetricOptions& options, const ContinualModel& model, const LabeledSet& target,
                 int source_task_id);

}  // namespace ctos
