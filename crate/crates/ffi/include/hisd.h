#ifndef HISD_H
#define HISD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HisdStatus {
  HISD_STATUS_OK = 0,
  HISD_STATUS_NULL_POINTER = 1,
  HISD_STATUS_INVALID_UTF8 = 2,
  HISD_STATUS_CONFIG = 3,
  HISD_STATUS_INVALID_ARGUMENT = 4,
  HISD_STATUS_NUMERICAL = 5,
  HISD_STATUS_BUFFER_TOO_SMALL = 6,
  HISD_STATUS_PANIC = 7,
} HisdStatus;

typedef enum HisdRunStatus {
  HISD_RUN_STATUS_CONVERGED = 0,
  HISD_RUN_STATUS_MAX_ITER = 1,
  HISD_RUN_STATUS_DIVERGED = 2,
} HisdRunStatus;

typedef enum HisdCheckStatus {
  HISD_CHECK_STATUS_PASS = 0,
  HISD_CHECK_STATUS_FAIL = 1,
  HISD_CHECK_STATUS_INCONCLUSIVE = 2,
} HisdCheckStatus;

/**
 * A parsed experiment with its landscape built.
 */
typedef struct HisdExperiment HisdExperiment;

/**
 * The result of one solver run.
 */
typedef struct HisdTrajectory HisdTrajectory;

/**
 * One trajectory record. Manifold diagnostics are NaN when unavailable.
 */
typedef struct HisdRecord {
  size_t t;
  double energy;
  double grad_norm;
  double dist;
  double y;
  double z;
  double z_over_g;
  double lambda_min;
} HisdRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). `needed` may be null.
 *
 * # Safety
 * `buf` must be valid for `len` bytes.
 */
enum HisdStatus hisd_last_error(char *buf, size_t len, size_t *needed);

/**
 * Parses a TOML experiment and builds its landscape.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum HisdStatus hisd_experiment_new(const char *toml, struct HisdExperiment **out);

/**
 * # Safety
 * `exp` must come from [`hisd_experiment_new`] and not be used afterwards.
 */
void hisd_experiment_free(struct HisdExperiment *exp);

/**
 * Parameter dimension, Morse index and nullity of the saddle.
 *
 * # Safety
 * `exp` must be a live handle; output pointers must be writable.
 */
enum HisdStatus hisd_experiment_shape(const struct HisdExperiment *exp,
                                      size_t *dim,
                                      size_t *index,
                                      size_t *nullity);

/**
 * Number of runs (sweep entries, or one when there is no sweep).
 *
 * # Safety
 * `exp` must be a live handle; `count` must be writable.
 */
enum HisdStatus hisd_experiment_run_count(const struct HisdExperiment *exp, size_t *count);

/**
 * Writes the saddle point into `theta[0..len]`; `len` must equal the dimension.
 *
 * # Safety
 * `theta` must be valid for `len` writes.
 */
enum HisdStatus hisd_experiment_saddle(const struct HisdExperiment *exp, double *theta, size_t len);

/**
 * Energy and gradient at `theta`. `grad` may be null.
 *
 * # Safety
 * `theta` and `grad` must be valid for `len` elements.
 */
enum HisdStatus hisd_energy_gradient(const struct HisdExperiment *exp,
                                     const double *theta,
                                     size_t len,
                                     double *energy,
                                     double *grad);

/**
 * Runs entry `run_index`. With `theta0` null the configured perturbed start
 * is used, otherwise `theta0[0..len]`.
 *
 * # Safety
 * `exp` must be a live handle; `theta0` null or valid for `len` reads;
 * `out` writable.
 */
enum HisdStatus hisd_run(const struct HisdExperiment *exp,
                         size_t run_index,
                         const double *theta0,
                         size_t len,
                         struct HisdTrajectory **out);

/**
 * # Safety
 * `traj` must come from [`hisd_run`] and not be used afterwards.
 */
void hisd_trajectory_free(struct HisdTrajectory *traj);

/**
 * Terminal status, iteration count and number of stored records.
 *
 * # Safety
 * `traj` must be a live handle; output pointers must be writable.
 */
enum HisdStatus hisd_trajectory_summary(const struct HisdTrajectory *traj,
                                        enum HisdRunStatus *status,
                                        size_t *iterations,
                                        size_t *records);

/**
 * # Safety
 * `traj` must be a live handle; `out` must be writable.
 */
enum HisdStatus hisd_trajectory_record(const struct HisdTrajectory *traj,
                                       size_t i,
                                       struct HisdRecord *out);

/**
 * Runs one named check. The JSON report is copied into `json` (may be null
 * with `json_len` 0 to only query the status and `needed`).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `json` valid for `json_len` bytes.
 */
enum HisdStatus hisd_verify(const struct HisdExperiment *exp,
                            const char *name,
                            enum HisdCheckStatus *status,
                            char *json,
                            size_t json_len,
                            size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HISD_H */
