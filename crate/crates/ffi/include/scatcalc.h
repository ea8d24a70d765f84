#ifndef SCATCALC_H
#define SCATCALC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ScFormat {
  SC_FORMAT_JSON = 0,
  SC_FORMAT_CSV = 1,
} ScFormat;

typedef enum ScStatus {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_POINTER = 1,
  SC_STATUS_INVALID_UTF8 = 2,
  SC_STATUS_CONFIG = 3,
  SC_STATUS_INVALID_PARAMETER = 4,
  SC_STATUS_NOT_ELLIPTIC = 5,
  SC_STATUS_DEGENERATE = 6,
  SC_STATUS_THRESHOLD = 7,
  SC_STATUS_OBSTRUCTION = 8,
  /**
   * Quadrature, integrator, chart or budget failure inside a computation.
   */
  SC_STATUS_NUMERICAL = 9,
  SC_STATUS_IO = 10,
  /**
   * Output buffer too small; the required size was reported.
   */
  SC_STATUS_BUFFER_TOO_SMALL = 11,
  SC_STATUS_PANIC = 12,
} ScStatus;

/**
 * Parsed experiment configuration.
 */
typedef struct ScConfig ScConfig;

/**
 * Compactly supported real potential on the line.
 */
typedef struct ScPotential ScPotential;

/**
 * Result of one experiment run.
 */
typedef struct ScReport ScReport;

/**
 * Reflection and transmission coefficients at one energy.
 */
typedef struct ScCoefficients {
  double lambda;
  double r_re;
  double r_im;
  double t_re;
  double t_im;
  double unitarity_defect;
} ScCoefficients;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated).
 *
 * # Safety
 * `buf` must point to `cap` writable bytes or be null; `needed` may be null.
 */
enum ScStatus sc_last_error(char *buf, size_t cap, size_t *needed);

/**
 * Parses a strict JSON configuration for the named experiment.
 *
 * # Safety
 * `experiment` and `json` must be NUL-terminated strings; `out` must be writable.
 */
enum ScStatus sc_config_parse(const char *experiment, const char *json, struct ScConfig **out);

/**
 * Replaces the seed of a parsed configuration.
 *
 * # Safety
 * `cfg` must come from `sc_config_parse`.
 */
enum ScStatus sc_config_set_seed(struct ScConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must come from `sc_config_parse` or be null; it is invalid afterwards.
 */
void sc_config_free(struct ScConfig *cfg);

/**
 * Runs the configured experiment. A report is produced even when checks fail.
 *
 * # Safety
 * `cfg` must come from `sc_config_parse`; `out` must be writable.
 */
enum ScStatus sc_run(const struct ScConfig *cfg, struct ScReport **out);

/**
 * 1 when no check failed, 0 otherwise, -1 for a null report.
 *
 * # Safety
 * `report` must come from `sc_run` or be null.
 */
int32_t sc_report_all_pass(const struct ScReport *report);

/**
 * Looks up a named metric.
 *
 * # Safety
 * `report` must come from `sc_run`; `name` NUL-terminated; `value` writable.
 */
enum ScStatus sc_report_metric(const struct ScReport *report, const char *name, double *value);

/**
 * Writes the summary JSON into `buf`. Call with a null `buf` to learn the size.
 *
 * # Safety
 * `report` must come from `sc_run`; `buf` must hold `cap` bytes or be null.
 */
enum ScStatus sc_report_summary(const struct ScReport *report,
                                enum ScFormat format,
                                char *buf,
                                size_t cap,
                                size_t *needed);

/**
 * Writes summary.json (and CSV tables for the csv format) under `dir`.
 *
 * # Safety
 * `report` must come from `sc_run`; `dir` NUL-terminated.
 */
enum ScStatus sc_report_write(const struct ScReport *report, const char *dir, enum ScFormat format);

/**
 * # Safety
 * `report` must come from `sc_run` or be null; it is invalid afterwards.
 */
void sc_report_free(struct ScReport *report);

/**
 * Square barrier of the given height on [-width/2, width/2].
 *
 * # Safety
 * `out` must be writable.
 */
enum ScStatus sc_potential_square_barrier(double height, double width, struct ScPotential **out);

/**
 * Smooth compactly supported bump.
 *
 * # Safety
 * `out` must be writable.
 */
enum ScStatus sc_potential_smooth_bump(double height,
                                       double centre,
                                       double width,
                                       struct ScPotential **out);

/**
 * # Safety
 * `v` must come from an `sc_potential_*` constructor or be null.
 */
void sc_potential_free(struct ScPotential *v);

/**
 * Reflection and transmission for a wave incident from the left at frequency `lambda`.
 *
 * # Safety
 * `v` must come from an `sc_potential_*` constructor; `out` must be writable.
 */
enum ScStatus sc_scatter_solve(const struct ScPotential *v,
                               double lambda,
                               struct ScCoefficients *out);

/**
 * Closed-form coefficients of the square barrier, for cross-checking.
 *
 * # Safety
 * `out` must be writable.
 */
enum ScStatus sc_square_barrier_exact(double height,
                                      double width,
                                      double lambda,
                                      struct ScCoefficients *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCATCALC_H */
