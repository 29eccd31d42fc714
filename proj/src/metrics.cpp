#include "ctos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "ctos/error.hpp"

namespace ctos {

namespace {

constexpr double kPrecisionMin = 1e-12;
constexpr double kPrecisionMax = 1e12;

void check_rows(const Matrix& m, std::span<const int> labels, const char* who) {
  if (static_cast<std::size_t>(m.rows()) != labels.size())
    fail(ErrorKind::Dimension, std::string(who) + ": row count does not match label count");
  if (labels.empty()) fail(ErrorKind::Input, std::string(who) + ": empty target set");
  if (!m.allFinite()) fail(ErrorKind::Input, std::string(who) + ": non-finite input");
  for (int y : labels)
    if (y < 0) fail(ErrorKind::Input, std::string(who) + ": negative label");
}

std::vector<int> present_classes(std::span<const int> labels) {
  std::set<int> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

/// Evidence pieces for one target vector in the SVD basis.
struct SvdEvidence {
  const Vector& sing;   // singular values, length r
  const Vector& proj;   // U^T y, length r
  double y_sq;          // |y|^2
  double n;
  double dim;           // feature dimension D

  struct Terms {
    double gamma, m_sq, residual, evidence;
  };

  Terms at(double alpha, double beta) const {
    double gamma = 0.0, m_sq = 0.0, fit = 0.0, logdet = 0.0;
    for (Eigen::Index j = 0; j < sing.size(); ++j) {
      const double s2 = sing[j] * sing[j];
      const double denom = alpha + beta * s2;
      gamma += beta * s2 / denom;
      const double mj = beta * sing[j] * proj[j] / denom;
      m_sq += mj * mj;
      const double r = proj[j] * alpha / denom;
      fit += r * r;
      logdet += std::log(denom);
    }
    logdet += (dim - static_cast<double>(sing.size())) * std::log(alpha);
    const double residual = std::max(0.0, y_sq - proj.squaredNorm()) + fit;
    const double evidence = 0.5 * dim * std::log(alpha) + 0.5 * n * std::log(beta) -
                            0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * beta * residual -
                            0.5 * alpha * m_sq - 0.5 * logdet;
    return {gamma, m_sq, residual, evidence};
  }
};

double log_det_spd(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Input, "transrate: covariance not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double coding_rate(const Matrix& z, double eps) {
  const auto n = static_cast<double>(z.rows());
  const auto h = z.cols();
  Matrix a = Matrix::Identity(h, h);
  a.noalias() += (static_cast<double>(h) / (n * eps * eps)) * (z.transpose() * z);
  return 0.5 * log_det_spd(a);
}

Matrix centred(const Matrix& z) {
  Matrix out = z;
  out.rowwise() -= z.colwise().mean();
  return out;
}

}  // namespace

const char* to_string(MetricId id) noexcept {
  switch (id) {
    case MetricId::LogME: return "logme";
    case MetricId::LEEP: return "leep";
    case MetricId::TransRate: return "transrate";
    case MetricId::GBC: return "gbc";
  }
  return "?";
}

MetricId parse_metric(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "logme") return MetricId::LogME;
  if (lower == "leep") return MetricId::LEEP;
  if (lower == "transrate") return MetricId::TransRate;
  if (lower == "gbc") return MetricId::GBC;
  fail(ErrorKind::Config, "invalid field 'metric': unknown metric '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// LogME

double logme_evidence(const Matrix& features, const Vector& targets, double alpha, double beta) {
  Eigen::BDCSVD<Matrix> svd(features, Eigen::ComputeThinU);
  const Vector proj = svd.matrixU().transpose() * targets;
  const Vector sing = svd.singularValues();
  SvdEvidence ev{sing, proj, targets.squaredNorm(), static_cast<double>(features.rows()),
                 static_cast<double>(features.cols())};
  return ev.at(alpha, beta).evidence;
}

double logme(const Matrix& features, std::span<const int> labels) {
  check_rows(features, labels, "logme");
  const auto n = features.rows();
  if (n < 2) fail(ErrorKind::Input, "logme: need at least 2 samples");
  const auto classes = present_classes(labels);
  if (classes.size() < 2) fail(ErrorKind::Input, "logme: need at least 2 classes");

  Eigen::BDCSVD<Matrix> svd(features, Eigen::ComputeThinU);
  const Matrix& u = svd.matrixU();
  const Vector sing = svd.singularValues();

  double total = 0.0;
  for (int c : classes) {
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = labels[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0;
    const Vector proj = u.transpose() * y;
    SvdEvidence ev{sing, proj, y.squaredNorm(), static_cast<double>(n), static_cast<double>(features.cols())};

    double alpha = 1.0, beta = 1.0;
    double prev = ev.at(alpha, beta).evidence;
    double current = prev;
    for (int it = 0; it < 100; ++it) {
      const auto t = ev.at(alpha, beta);
      alpha = std::clamp(t.m_sq > 0.0 ? t.gamma / t.m_sq : kPrecisionMax, kPrecisionMin, kPrecisionMax);
      beta = std::clamp(t.residual > 0.0 ? (static_cast<double>(n) - t.gamma) / t.residual : kPrecisionMax,
                        kPrecisionMin, kPrecisionMax);
      current = ev.at(alpha, beta).evidence;
      if (std::abs(current - prev) < 1e-3) break;
      prev = current;
    }
    total += current / static_cast<double>(n);
  }
  return total / static_cast<double>(classes.size());
}

// ---------------------------------------------------------------------------
// LEEP

double leep(const Matrix& source_probs, std::span<const int> labels) {
  check_rows(source_probs, labels, "leep");
  const auto n = source_probs.rows();
  const auto z = source_probs.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    if ((source_probs.row(i).array() < 0.0).any() || std::abs(source_probs.row(i).sum() - 1.0) > 1e-6)
      fail(ErrorKind::Input, "leep: row " + std::to_string(i) + " is not a probability distribution");
  }
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  Matrix joint = Matrix::Zero(classes, z);
  for (Eigen::Index i = 0; i < n; ++i) joint.row(labels[static_cast<std::size_t>(i)]) += source_probs.row(i);
  joint /= static_cast<double>(n);
  const Vector marginal = joint.colwise().sum().transpose();

  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    double eep = 0.0;
    for (Eigen::Index k = 0; k < z; ++k) {
      if (marginal[k] <= 0.0) continue;
      eep += joint(y, k) / marginal[k] * source_probs(i, k);
    }
    total += std::log(eep);
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// TransRate

double transrate(const Matrix& features, std::span<const int> labels, double eps) {
  check_rows(features, labels, "transrate");
  if (!(eps > 0.0)) fail(ErrorKind::Input, "transrate: eps must be positive");
  if (features.rows() < 2) fail(ErrorKind::Input, "transrate: need at least 2 samples");
  const auto n = static_cast<double>(features.rows());
  const Matrix z = centred(features);
  double conditional = 0.0;
  for (int c : present_classes(labels)) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) rows.push_back(static_cast<Eigen::Index>(i));
    const Matrix zc = centred(z(rows, Eigen::all));
    conditional += (static_cast<double>(rows.size()) / n) * coding_rate(zc, eps);
  }
  return coding_rate(z, eps) - conditional;
}

// ---------------------------------------------------------------------------
// GBC

double gbc(const Matrix& features, std::span<const int> labels) {
  check_rows(features, labels, "gbc");
  const auto classes = present_classes(labels);
  if (classes.size() < 2) fail(ErrorKind::Input, "gbc: need at least 2 classes");
  std::vector<Vector> means, vars;
  for (int c : classes) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) rows.push_back(static_cast<Eigen::Index>(i));
    if (rows.size() < 2) fail(ErrorKind::Input, "gbc: class " + std::to_string(c) + " has fewer than 2 samples");
    const Matrix xc = features(rows, Eigen::all);
    const Vector mu = xc.colwise().mean().transpose();
    Vector var = (xc.rowwise() - mu.transpose()).array().square().colwise().mean().transpose();
    var = var.cwiseMax(1e-6);
    means.push_back(mu);
    vars.push_back(var);
  }
  double score = 0.0;
  for (std::size_t a = 0; a < classes.size(); ++a) {
    for (std::size_t b = a + 1; b < classes.size(); ++b) {
      const Vector avg = 0.5 * (vars[a] + vars[b]);
      const double mahal = ((means[a] - means[b]).array().square() / avg.array()).sum();
      const double logdets = avg.array().log().sum() -
                             0.5 * (vars[a].array().log().sum() + vars[b].array().log().sum());
      const double db = mahal / 8.0 + 0.5 * logdets;
      score -= std::exp(-db);
    }
  }
  return score;
}

// ---------------------------------------------------------------------------
// Dispatch

Scorer make_scorer(const MetricOptions& options) {
  switch (options.id) {
    case MetricId::LogME:
      return [](const ContinualModel& m, const LabeledSet& t, int) {
        return logme(forward_features(m, t.inputs), t.labels);
      };
    case MetricId::LEEP:
      return [](const ContinualModel& m, const LabeledSet& t, int source) {
        return leep(head_probabilities(m, t.inputs, source), t.labels);
      };
    case MetricId::TransRate:
      return [eps = options.transrate_eps](const ContinualModel& m, const LabeledSet& t, int) {
        return transrate(forward_features(m, t.inputs), t.labels, eps);
      };
    case MetricId::GBC:
      return [](const ContinualModel& m, const LabeledSet& t, int) {
        return gbc(forward_features(m, t.inputs), t.labels);
      };
  }
  fail(ErrorKind::Config, "unknown metric");
}

Scorer constant_scorer(double value) {
  return [value](const ContinualModel&, const LabeledSet&, int) { return value; };
}

TransferScore tr(const MetricOptions& options, const ContinualModel& model, const LabeledSet& target,
                 int source_task_id) {
  if (target.size() == 0) fail(ErrorKind::Input, "tr: empty target set");
  const double v = make_scorer(options)(model, target, source_task_id);
  if (!std::isfinite(v)) fail(ErrorKind::Input, std::string("tr: ") + to_string(options.id) + " score is not finite");
  return TransferScore{v, options.id};
}

}  // namespace ctos
