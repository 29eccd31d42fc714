/* C interface to the ctos continual task-ordering engine.
 *
 * All functions return a ctos_status. On failure a message describing the
 * error is available from ctos_last_error() on the calling thread until the
 * next call into the library. Handles are opaque and must be released with
 * the matching *_free function.
 */
#ifndef CTOS_CTOS_H
#define CTOS_CTOS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  define CTOS_API __declspec(dllexport)
#elif defined(__GNUC__)
#  define CTOS_API __attribute__((visibility("default")))
#else
#  define CTOS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ctos_status {
  CTOS_OK = 0,
  /* validation failures */
  CTOS_ERR_CONFIG = 1,
  CTOS_ERR_PARSE = 2,
  CTOS_ERR_DIMENSION = 3,
  CTOS_ERR_INPUT = 4,
  CTOS_ERR_SPLIT = 5,
  CTOS_ERR_MISSING_HEAD = 6,
  /* runtime failures */
  CTOS_ERR_DIVERGENCE = 16,
  CTOS_ERR_EVALUATION = 17,
  CTOS_ERR_SELECTION = 18,
  CTOS_ERR_IO = 19,
  CTOS_ERR_INTERNAL = 20
} ctos_status;

typedef struct ctos_suite ctos_suite;
typedef struct ctos_config ctos_config;

typedef struct ctos_suite_params {
  int task_count;
  int classes_per_task;
  int dim;
  int samples_per_class;
  double similarity;
  double difficulty_spread;
  double eval_fraction;
  double mean_scale;
  uint64_t seed;
} ctos_suite_params;

typedef struct ctos_probe_params {
  int samples_per_class;
  int epochs;
  int hidden;
  double learning_rate;
  int minibatch;
  uint64_t seed;
} ctos_probe_params;

CTOS_API const char* ctos_version(void);
CTOS_API const char* ctos_last_error(void);
CTOS_API const char* ctos_status_name(ctos_status status);
/* Non-zero when the status denotes invalid input rather than a runtime failure. */
CTOS_API int ctos_status_is_validation(ctos_status status);

CTOS_API void ctos_suite_params_default(ctos_suite_params* out);
CTOS_API void ctos_probe_params_default(ctos_probe_params* out);

/* ---- suites ---- */
CTOS_API ctos_status ctos_suite_generate(const ctos_suite_params* params, ctos_suite** out);
/* Splits the suite's single batch into consecutive batches of the given sizes. */
CTOS_API ctos_status ctos_suite_partition(ctos_suite* suite, const int* sizes, size_t count);
CTOS_API ctos_status ctos_suite_load(const char* manifest_path, double eval_fraction, uint64_t seed,
                                     ctos_suite** out);
CTOS_API ctos_status ctos_suite_save(const ctos_suite* suite, const char* out_dir);
CTOS_API size_t ctos_suite_batch_count(const ctos_suite* suite);
CTOS_API size_t ctos_suite_task_count(const ctos_suite* suite);
CTOS_API void ctos_suite_free(ctos_suite* suite);

/* Writes order.json and scores_batch<k>.csv into out_dir. metric is one of
 * "logme", "leep", "transrate", "gbc". order_out, when non-null, receives
 * ctos_suite_task_count() task ids. */
CTOS_API ctos_status ctos_select_order(const ctos_suite* suite, const ctos_probe_params* probe, const char* metric,
                                       double transrate_eps, const char* out_dir, int* order_out);

/* ---- experiment configs ---- */
CTOS_API ctos_status ctos_config_load(const char* path, ctos_config** out);
CTOS_API ctos_status ctos_config_from_json(const char* json_text, ctos_config** out);
/* Sets a (dotted) key such as "probe.samples_per_class" to a JSON value. */
CTOS_API ctos_status ctos_config_set(ctos_config* config, const char* key, const char* json_value);
/* Copies the effective config as JSON into buf (NUL-terminated); *needed gets its length excluding the NUL, as with snprintf. */
CTOS_API ctos_status ctos_config_json(const ctos_config* config, char* buf, size_t len, size_t* needed);
CTOS_API void ctos_config_free(ctos_config* config);

/* Runs the sweep described by config and writes reports into its output_dir. */
CTOS_API ctos_status ctos_run(const ctos_config* config);
/* HCTOS against random orders; writes comparison files into output_dir. */
CTOS_API ctos_status ctos_compare(const ctos_config* config);
/* Recomputes correlation.csv from reports.csv found in reports_dir. */
CTOS_API ctos_status ctos_correlate(const char* reports_dir, const char* out_dir);

/* ---- numeric surfaces ---- */
/* features: n x h row-major; labels: n task-local class ids. */
CTOS_API ctos_status ctos_metric_score(const char* metric, const double* features, size_t n, size_t h,
                                       const int32_t* labels, double transrate_eps, double* out);
/* probs: n x z row-major, rows summing to one. */
CTOS_API ctos_status ctos_leep(const double* probs, size_t n, size_t z, const int32_t* labels, double* out);
CTOS_API ctos_status ctos_pearson(const double* xs, const double* ys, size_t n, double* r, double* p);
/* scores: n x n row-major, diagonal ignored; order_out receives n indices. */
CTOS_API ctos_status ctos_greedy_order(const double* scores, size_t n, int* order_out);
CTOS_API ctos_status ctos_agem_project(const double* g, const double* g_ref, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif /* CTOS_CTOS_H */
