#ifndef OFFRAMP_H
#define OFFRAMP_H

/* Generated by cbindgen from offramp-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum OfframpStatus {
  OFFRAMP_STATUS_OK = 0,
  OFFRAMP_STATUS_NULL_POINTER = 1,
  OFFRAMP_STATUS_INVALID_ARGUMENT = 2,
  OFFRAMP_STATUS_IO_ERROR = 3,
  OFFRAMP_STATUS_FORMAT_ERROR = 4,
  OFFRAMP_STATUS_UTF8_ERROR = 5,
} OfframpStatus;

/**
 * Opaque base-case lookup table.
 */
typedef struct OfframpTable OfframpTable;

/**
 * Per-lane parameters of one required lane change, left to right.
 */
typedef struct OfframpLaneParams {
  /**
   * Average lane speed (m/s).
   */
  double v;
  /**
   * Log-normal headway location (log meters).
   */
  double mu;
  /**
   * Log-normal headway scale.
   */
  double sigma;
  /**
   * Critical gap (m).
   */
  double g;
  /**
   * Lane change duration (s).
   */
  double t;
} OfframpLaneParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must point to at least `cap` writable bytes, or be NULL (then only
 * the length is returned).
 */
uintptr_t offramp_last_error_message(char *buf, uintptr_t cap);

/**
 * Build the default normalized lookup table.
 *
 * # Safety
 * `out` must be a valid pointer to receive the handle.
 */
enum OfframpStatus offramp_table_build_default(uint64_t trials_per_cell,
                                               uint64_t seed,
                                               struct OfframpTable **out);

/**
 * Load a table from a JSON file produced by `offramp_table_save` or the
 * `offramp table build` command.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum OfframpStatus offramp_table_load(const char *path, struct OfframpTable **out);

/**
 * Persist a table to a JSON file.
 *
 * # Safety
 * `table` must be a live handle; `path` a NUL-terminated string.
 */
enum OfframpStatus offramp_table_save(const struct OfframpTable *table, const char *path);

/**
 * Release a table handle. NULL is a no-op.
 *
 * # Safety
 * `table` must have come from this library and not be freed twice.
 */
void offramp_table_free(struct OfframpTable *table);

/**
 * Probability of reaching a goal `d` meters ahead, `lane_count` lane
 * changes over, at ego speed `v1`.
 *
 * # Safety
 * `table` must be a live handle, `lanes` must point to `lane_count`
 * entries, `out_probability` must be valid.
 */
enum OfframpStatus offramp_reach_probability(const struct OfframpTable *table,
                                             double d,
                                             double v1,
                                             const struct OfframpLaneParams *lanes,
                                             uintptr_t lane_count,
                                             double *out_probability);

/**
 * Single lane-change probability (one-lane special case of the above).
 *
 * # Safety
 * Same rules as `offramp_reach_probability`.
 */
enum OfframpStatus offramp_single_change_probability(const struct OfframpTable *table,
                                                     double d,
                                                     double v1,
                                                     const struct OfframpLaneParams *lane,
                                                     double *out_probability);

/**
 * Model-side critical gap: delta * v + s0.
 */
double offramp_gipps_critical_gap(double v, double delta, double s0);

/**
 * Critical gap to the adjacent-lane leader with noise term `eps`.
 */
double offramp_toledo_lead_critical_gap(double dv_lead, double eps);

/**
 * Critical gap to the adjacent-lane follower with noise term `eps`.
 */
double offramp_toledo_lag_critical_gap(double dv_lag, double eps);

/**
 * Adjacent-speed clamp rule used when composing multi-lane queries.
 */
double offramp_clamp_adjacent_speed(double v_prev, double v_next, double v_l);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* OFFRAMP_H */
