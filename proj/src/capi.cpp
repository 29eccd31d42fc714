#include "ctos/ctos.h"

#include <chrono>
#include <cstring>
#include <new>
#include <string>

#include <nlohmann/json.hpp>

#include "ctos/error.hpp"
#include "ctos/harness.hpp"
#include "io.hpp"

struct ctos_suite {
  std::vector<ctos::TaskBatch> batches;
};

struct ctos_config {
  nlohmann::json doc = nlohmann::json::object();
};

namespace {

thread_local std::string last_error;

ctos_status status_of(ctos::ErrorKind kind) {
  using ctos::ErrorKind;
  switch (kind) {
    case ErrorKind::Config: return CTOS_ERR_CONFIG;
    case ErrorKind::Parse: return CTOS_ERR_PARSE;
    case ErrorKind::Dimension: return CTOS_ERR_DIMENSION;
    case ErrorKind::Input: return CTOS_ERR_INPUT;
    case ErrorKind::Split: return CTOS_ERR_SPLIT;
    case ErrorKind::MissingHead: return CTOS_ERR_MISSING_HEAD;
    case ErrorKind::Divergence: return CTOS_ERR_DIVERGENCE;
    case ErrorKind::Evaluation: return CTOS_ERR_EVALUATION;
    case ErrorKind::Selection: return CTOS_ERR_SELECTION;
    case ErrorKind::Io: return CTOS_ERR_IO;
  }
  return CTOS_ERR_INTERNAL;
}

template <class F>
ctos_status guarded(F&& fn) {
  last_error.clear();
  try {
    fn();
    return CTOS_OK;
  } catch (const ctos::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = e.what();
    return CTOS_ERR_IO;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return CTOS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return CTOS_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) ctos::fail(ctos::ErrorKind::Input, what);
}

// Message of the error config_from_json raises for `doc`, empty when valid.
std::string config_problem(const nlohmann::json& doc) {
  try {
    ctos::config_from_json(doc);
    return {};
  } catch (const ctos::Error& e) {
    return e.what();
  }
}

ctos::SuiteConfig to_suite(const ctos_suite_params& p) {
  ctos::SuiteConfig s;
  s.task_count = p.task_count;
  s.classes_per_task = p.classes_per_task;
  s.dim = p.dim;
  s.samples_per_class = p.samples_per_class;
  s.similarity = p.similarity;
  s.difficulty_spread = p.difficulty_spread;
  s.eval_fraction = p.eval_fraction;
  s.mean_scale = p.mean_scale;
  s.seed = p.seed;
  return s;
}

ctos::Matrix row_major(const double* data, size_t n, size_t cols) {
  ctos::Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i * cols + j];
  return m;
}

double elapsed_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

extern "C" {

const char* ctos_version(void) { return ctos::kVersion; }
const char* ctos_last_error(void) { return last_error.c_str(); }

const char* ctos_status_name(ctos_status status) {
  switch (status) {
    case CTOS_OK: return "ok";
    case CTOS_ERR_CONFIG: return "config error";
    case CTOS_ERR_PARSE: return "parse error";
    case CTOS_ERR_DIMENSION: return "dimension error";
    case CTOS_ERR_INPUT: return "input error";
    case CTOS_ERR_SPLIT: return "split error";
    case CTOS_ERR_MISSING_HEAD: return "missing head";
    case CTOS_ERR_DIVERGENCE: return "training divergence";
    case CTOS_ERR_EVALUATION: return "evaluation error";
    case CTOS_ERR_SELECTION: return "selection error";
    case CTOS_ERR_IO: return "io error";
    case CTOS_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

int ctos_status_is_validation(ctos_status status) { return status != CTOS_OK && status < CTOS_ERR_DIVERGENCE; }

void ctos_suite_params_default(ctos_suite_params* out) {
  if (!out) return;
  const ctos::SuiteConfig d;
  *out = ctos_suite_params{d.task_count,        d.classes_per_task, d.dim,        d.samples_per_class, d.similarity,
                           d.difficulty_spread, d.eval_fraction,    d.mean_scale, d.seed};
}

void ctos_probe_params_default(ctos_probe_params* out) {
  if (!out) return;
  const ctos::ProbeConfig d;
  *out = ctos_probe_params{d.samples_per_class, d.epochs, d.hidden, d.learning_rate, d.minibatch, d.seed};
}

ctos_status ctos_suite_generate(const ctos_suite_params* params, ctos_suite** out) {
  return guarded([&] {
    require(params && out, "null argument");
    auto suite = std::make_unique<ctos_suite>();
    suite->batches.push_back(ctos::generate_synthetic_suite(to_suite(*params)));
    *out = suite.release();
  });
}

ctos_status ctos_suite_partition(ctos_suite* suite, const int* sizes, size_t count) {
  return guarded([&] {
    require(suite && (sizes || count == 0), "null argument");
    require(suite->batches.size() == 1, "suite is already partitioned");
    if (count == 0) return;
    suite->batches = ctos::partition_batches(suite->batches.front(), std::span<const int>(sizes, count));
  });
}

ctos_status ctos_suite_load(const char* manifest_path, double eval_fraction, uint64_t seed, ctos_suite** out) {
  return guarded([&] {
    require(manifest_path && out, "null argument");
    auto suite = std::make_unique<ctos_suite>();
    suite->batches = ctos::load_manifest(manifest_path, ctos::CsvLoadOptions{eval_fraction, seed});
    *out = suite.release();
  });
}

ctos_status ctos_suite_save(const ctos_suite* suite, const char* out_dir) {
  return guarded([&] {
    require(suite && out_dir, "null argument");
    ctos::write_suite(suite->batches, out_dir);
  });
}

size_t ctos_suite_batch_count(const ctos_suite* suite) { return suite ? suite->batches.size() : 0; }

size_t ctos_suite_task_count(const ctos_suite* suite) {
  if (!suite) return 0;
  size_t n = 0;
  for (const auto& b : suite->batches) n += b.tasks.size();
  return n;
}

void ctos_suite_free(ctos_suite* suite) { delete suite; }

ctos_status ctos_select_order(const ctos_suite* suite, const ctos_probe_params* probe, const char* metric,
                              double transrate_eps, const char* out_dir, int* order_out) {
  return guarded([&] {
    require(suite && probe && metric, "null argument");
    ctos::ProbeConfig pc{probe->samples_per_class, probe->epochs, probe->hidden,
                         probe->learning_rate,     probe->minibatch, probe->seed};
    pc.validate();
    const ctos::MetricOptions options{ctos::parse_metric(metric), transrate_eps};
    if (!(transrate_eps > 0.0)) ctos::fail(ctos::ErrorKind::Config, "invalid field 'transrate_eps': must be > 0");
    const auto selections = ctos::hctos_multibatch(suite->batches, ctos::make_scorer(options), options.id, pc);
    if (out_dir) ctos::emit_selection(selections, out_dir);
    if (order_out) {
      size_t k = 0;
      for (const auto& sel : selections)
        for (int id : sel.task_ids) order_out[k++] = id;
    }
  });
}

ctos_status ctos_config_load(const char* path, ctos_config** out) {
  return guarded([&] {
    require(path && out, "null argument");
    auto cfg = std::make_unique<ctos_config>();
    try {
      cfg->doc = nlohmann::json::parse(ctos::io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
      ctos::fail(ctos::ErrorKind::Parse, std::string(path) + ": " + e.what());
    }
    if (!cfg->doc.is_object()) ctos::fail(ctos::ErrorKind::Config, std::string(path) + ": config must be a JSON object");
    *out = cfg.release();
  });
}

ctos_status ctos_config_from_json(const char* json_text, ctos_config** out) {
  return guarded([&] {
    require(json_text && out, "null argument");
    auto cfg = std::make_unique<ctos_config>();
    try {
      cfg->doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      ctos::fail(ctos::ErrorKind::Parse, e.what());
    }
    if (!cfg->doc.is_object()) ctos::fail(ctos::ErrorKind::Config, "config must be a JSON object");
    *out = cfg.release();
  });
}

ctos_status ctos_config_set(ctos_config* config, const char* key, const char* json_value) {
  return guarded([&] {
    require(config && key && json_value, "null argument");
    nlohmann::json value = nlohmann::json::parse(json_value, nullptr, false);
    if (value.is_discarded()) value = std::string(json_value);
    nlohmann::json edited = config->doc;
    nlohmann::json* node = &edited;
    for (auto part : ctos::io::split_fields(key, '.')) {
      if (part.empty()) ctos::fail(ctos::ErrorKind::Config, "invalid config key '" + std::string(key) + "'");
      if (!node->is_object()) *node = nlohmann::json::object();
      node = &(*node)[std::string(part)];
    }
    *node = std::move(value);
    // Reject edits that introduce a new problem; a config that is still
    // incomplete (e.g. no suite yet) may keep being edited.
    const auto after = config_problem(edited);
    if (!after.empty() && after != config_problem(config->doc)) ctos::fail(ctos::ErrorKind::Config, after);
    config->doc = std::move(edited);
  });
}

ctos_status ctos_config_json(const ctos_config* config, char* buf, size_t len, size_t* needed) {
  return guarded([&] {
    require(config != nullptr, "null argument");
    const std::string text = ctos::config_to_json(ctos::config_from_json(config->doc)).dump(2);
    if (needed) *needed = text.size();
    if (buf && len > 0) {
      const size_t n = std::min(len - 1, text.size());
      std::memcpy(buf, text.data(), n);
      buf[n] = '\0';
    }
  });
}

void ctos_config_free(ctos_config* config) { delete config; }

ctos_status ctos_run(const ctos_config* config) {
  return guarded([&] {
    require(config != nullptr, "null argument");
    const auto start = std::chrono::steady_clock::now();
    const auto cfg = ctos::config_from_json(config->doc);
    if (cfg.output_dir.empty()) ctos::fail(ctos::ErrorKind::Config, "invalid field 'output_dir': required");
    const auto result = ctos::run_experiment(cfg);
    ctos::emit(result, cfg, cfg.output_dir, elapsed_since(start));
  });
}

ctos_status ctos_compare(const ctos_config* config) {
  return guarded([&] {
    require(config != nullptr, "null argument");
    const auto start = std::chrono::steady_clock::now();
    const auto cfg = ctos::config_from_json(config->doc);
    if (cfg.output_dir.empty()) ctos::fail(ctos::ErrorKind::Config, "invalid field 'output_dir': required");
    const auto batches = ctos::materialize_batches(cfg);
    const auto report = ctos::compare_hctos_random(cfg, batches);
    ctos::emit_comparison(report, cfg, cfg.output_dir, elapsed_since(start));
  });
}

ctos_status ctos_correlate(const char* reports_dir, const char* out_dir) {
  return guarded([&] {
    require(reports_dir != nullptr, "null argument");
    ctos::MetricId metric = ctos::MetricId::LogME;
    const auto runs = ctos::load_reports(reports_dir, &metric);
    const auto rows = ctos::correlate_runs(runs, metric);
    const std::filesystem::path dir = out_dir ? out_dir : reports_dir;
    ctos::io::write_atomic(dir / "correlation.csv", ctos::format_correlation_csv(rows));
  });
}

ctos_status ctos_metric_score(const char* metric, const double* features, size_t n, size_t h, const int32_t* labels,
                              double transrate_eps, double* out) {
  return guarded([&] {
    require(metric && features && labels && out, "null argument");
    const auto m = row_major(features, n, h);
    const std::vector<int> y(labels, labels + n);
    switch (ctos::parse_metric(metric)) {
      case ctos::MetricId::LogME: *out = ctos::logme(m, y); break;
      case ctos::MetricId::TransRate: *out = ctos::transrate(m, y, transrate_eps); break;
      case ctos::MetricId::GBC: *out = ctos::gbc(m, y); break;
      case ctos::MetricId::LEEP: ctos::fail(ctos::ErrorKind::Config, "leep takes probabilities; use ctos_leep");
    }
  });
}

ctos_status ctos_leep(const double* probs, size_t n, size_t z, const int32_t* labels, double* out) {
  return guarded([&] {
    require(probs && labels && out, "null argument");
    *out = ctos::leep(row_major(probs, n, z), std::vector<int>(labels, labels + n));
  });
}

ctos_status ctos_pearson(const double* xs, const double* ys, size_t n, double* r, double* p) {
  return guarded([&] {
    require(xs && ys, "null argument");
    const auto c = ctos::pearson(std::span<const double>(xs, n), std::span<const double>(ys, n));
    if (r) *r = c.r;
    if (p) *p = c.p;
  });
}

ctos_status ctos_greedy_order(const double* scores, size_t n, int* order_out) {
  return guarded([&] {
    require(scores && order_out, "null argument");
    ctos::ScoreMatrix m;
    m.scores = row_major(scores, n, n);
    for (size_t i = 0; i < n; ++i) {
      m.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 0.0;
      m.task_ids.push_back(static_cast<int>(i));
    }
    const auto sel = ctos::greedy_order(m);
    for (size_t i = 0; i < n; ++i) order_out[i] = sel.order[i];
  });
}

ctos_status ctos_agem_project(const double* g, const double* g_ref, size_t n, double* out) {
  return guarded([&] {
    require(g && g_ref && out, "null argument");
    const ctos::Vector a = Eigen::Map<const ctos::Vector>(g, static_cast<Eigen::Index>(n));
    const ctos::Vector b = Eigen::Map<const ctos::Vector>(g_ref, static_cast<Eigen::Index>(n));
    Eigen::Map<ctos::Vector>(out, static_cast<Eigen::Index>(n)) = ctos::agem_project(a, b);
  });
}

}  // extern "C"
