#ifndef GEORECOVER_H
#define GEORECOVER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GrStatus {
  GR_STATUS_OK = 0,
  GR_STATUS_NULL_POINTER = 1,
  GR_STATUS_INVALID_INPUT = 2,
  GR_STATUS_CONFIG = 3,
  GR_STATUS_CLUSTER_DEGENERATE = 4,
  GR_STATUS_CLUSTER_UNDERFULL = 5,
  GR_STATUS_MIDPOINT_NOT_FOUND = 6,
  GR_STATUS_RATIO_UNAVAILABLE = 7,
  GR_STATUS_TAU_NOT_FOUND = 8,
  GR_STATUS_IO = 9,
  GR_STATUS_INVALID_UTF8 = 10,
  GR_STATUS_OUT_OF_RANGE = 11,
  GR_STATUS_BUFFER_TOO_SMALL = 12,
  GR_STATUS_PANIC = 13,
} GrStatus;

/**
 * Comparator table over `n` points.
 */
typedef struct GrComparator GrComparator;

/**
 * Experiment configuration.
 */
typedef struct GrConfig GrConfig;

/**
 * Recovered `n × n` distance matrix.
 */
typedef struct GrMetric GrMetric;

/**
 * Report of one experiment run.
 */
typedef struct GrReport GrReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static NUL-terminated library version.
 */
const char *gr_version(void);

/**
 * Copies the calling thread's last error message into `buf`.
 *
 * Returns [`GrStatus::BufferTooSmall`] when `cap` is short; `needed` then
 * holds the size to allocate. An empty string is written when no error occurred.
 *
 * # Safety
 * `buf` must be valid for `cap` bytes; `needed` must be null or writable.
 */
enum GrStatus gr_last_error_message(char *buf, uintptr_t cap, uintptr_t *needed);

/**
 * Parses and validates a TOML configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum GrStatus gr_config_from_toml(const char *toml, struct GrConfig **out);

/**
 * Loads a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GrStatus gr_config_load(const char *path, struct GrConfig **out);

/**
 * # Safety
 * `config` must be null or a live handle from a config constructor.
 */
void gr_config_free(struct GrConfig *config);

/**
 * Replaces the master seed.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum GrStatus gr_config_set_seed(struct GrConfig *config, uint64_t seed);

/**
 * Sets the artifact directory; a null `dir` disables artifacts.
 *
 * # Safety
 * `config` must be a live handle; `dir` must be null or NUL-terminated.
 */
enum GrStatus gr_config_set_output_dir(struct GrConfig *config, const char *dir);

/**
 * Runs the configured experiment.
 *
 * Pipeline failures do not fail the call: they are folded into the report,
 * whose [`gr_report_exit_code`] is then non-zero.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum GrStatus gr_run_experiment(const struct GrConfig *config, struct GrReport **out);

/**
 * # Safety
 * `report` must be null or a live handle from [`gr_run_experiment`].
 */
void gr_report_free(struct GrReport *report);

/**
 * Process exit code of the run: `0` ok, `1` failure, `2` contract violation.
 *
 * # Safety
 * `report` must be a live handle; `code` must be writable.
 */
enum GrStatus gr_report_exit_code(const struct GrReport *report, int32_t *code);

/**
 * Maximum and mean additive error of the run.
 *
 * # Safety
 * `report` must be a live handle; `max_error` and `mean_error` must be writable.
 */
enum GrStatus gr_report_errors(const struct GrReport *report,
                               double *max_error,
                               double *mean_error);

/**
 * The report as pretty-printed JSON; see [`gr_last_error_message`] for the buffer protocol.
 *
 * # Safety
 * `report` must be a live handle; `buf` valid for `cap` bytes; `needed` null or writable.
 */
enum GrStatus gr_report_json(const struct GrReport *report,
                             char *buf,
                             uintptr_t cap,
                             uintptr_t *needed);

/**
 * Comparator over `n` points from a row-major `n × n` table (copied).
 *
 * # Safety
 * `values` must be valid for `n * n` reads; `out` must be writable.
 */
enum GrStatus gr_comparator_new(uintptr_t n,
                                const double *values,
                                double epsilon,
                                struct GrComparator **out);

/**
 * # Safety
 * `comparator` must be null or a live handle from [`gr_comparator_new`].
 */
void gr_comparator_free(struct GrComparator *comparator);

/**
 * Recovers all pairwise distances from a finite comparator.
 *
 * # Safety
 * `comparator` must be a live handle; `out` must be writable.
 */
enum GrStatus gr_recover_all(const struct GrComparator *comparator, struct GrMetric **out);

/**
 * # Safety
 * `metric` must be null or a live handle from [`gr_recover_all`].
 */
void gr_metric_free(struct GrMetric *metric);

/**
 * Number of points of a recovered metric.
 *
 * # Safety
 * `metric` must be a live handle; `n` must be writable.
 */
enum GrStatus gr_metric_size(const struct GrMetric *metric, uintptr_t *n);

/**
 * Recovered distance between points `i` and `j`.
 *
 * # Safety
 * `metric` must be a live handle; `value` must be writable.
 */
enum GrStatus gr_metric_get(const struct GrMetric *metric, uintptr_t i, uintptr_t j, double *value);

/**
 * Copies the row-major `n × n` matrix into `buf` of `len` elements.
 *
 * # Safety
 * `metric` must be a live handle; `buf` must be valid for `len` writes.
 */
enum GrStatus gr_metric_copy(const struct GrMetric *metric, double *buf, uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEORECOVER_H */
