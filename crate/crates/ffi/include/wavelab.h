/* C interface to the wavelab finite element laboratory. */

#ifndef WAVELAB_H
#define WAVELAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the CLI exit contract.
 */
typedef enum WlStatus {
  WL_OK = 0,
  /**
   * Internal error (I/O, panic).
   */
  WL_ERR_INTERNAL = 1,
  /**
   * Invalid configuration or arguments.
   */
  WL_ERR_VALIDATION = 2,
  /**
   * A check ran but did not meet its tolerance.
   */
  WL_ERR_ASSERTION = 3,
  /**
   * A linear solver failed to converge.
   */
  WL_ERR_SOLVER = 4,
  /**
   * A required pointer argument was null.
   */
  WL_ERR_NULL_ARGUMENT = 5,
  /**
   * Input text was not valid UTF-8.
   */
  WL_ERR_UTF8 = 6,
} WlStatus;

/**
 * Opaque parsed-and-validated run configuration.
 */
typedef struct WlConfig WlConfig;

/**
 * Opaque completed simulation trace.
 */
typedef struct WlTrace WlTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; do not free.
 */
const char *wl_version(void);

/**
 * Copy the last error message of this thread into `buf` (up to `cap` bytes
 * including the NUL terminator) and return the full message length.
 *
 * # Safety
 * `buf` must point to at least `cap` writable bytes, or be null (then only
 * the length is returned).
 */
size_t wl_last_error_message(char *buf, size_t cap);

/**
 * Parse a configuration in the sectioned key-value format.
 *
 * On success writes a fresh handle to `out`; free it with [`wl_config_free`].
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum WlStatus wl_config_parse(const char *text, struct WlConfig **out);

/**
 * # Safety
 * `cfg` must be a handle returned by [`wl_config_parse`], not yet freed.
 */
void wl_config_free(struct WlConfig *cfg);

/**
 * Run the configured simulation and hand back a trace handle.
 *
 * # Safety
 * `cfg` must come from [`wl_config_parse`]; `out` must be a valid pointer.
 * Free the trace with [`wl_trace_free`].
 */
enum WlStatus wl_run(const struct WlConfig *cfg, struct WlTrace **out);

/**
 * Number of recorded states (steps + 1 for a stable run).
 *
 * # Safety
 * `trace` must come from [`wl_run`].
 */
size_t wl_trace_len(const struct WlTrace *trace);

/**
 * Time step of the trace.
 *
 * # Safety
 * Pointers must be valid; `trace` from [`wl_run`].
 */
enum WlStatus wl_trace_dt(const struct WlTrace *trace, double *out);

/**
 * Conserved-form energy at step `index`.
 *
 * # Safety
 * Pointers must be valid; `trace` from [`wl_run`].
 */
enum WlStatus wl_trace_energy(const struct WlTrace *trace, size_t index, double *out);

/**
 * Whether the run stayed stable (1) or was truncated by energy growth (0).
 *
 * # Safety
 * Pointers must be valid; `trace` from [`wl_run`].
 */
enum WlStatus wl_trace_stable(const struct WlTrace *trace, int32_t *out);

/**
 * # Safety
 * `trace` must come from [`wl_run`], not yet freed.
 */
void wl_trace_free(struct WlTrace *trace);

/**
 * Run the equivalence check described by the config's [compare] section.
 * Writes the max normalized discrepancy and whether it met the tolerance;
 * returns `WL_ERR_ASSERTION` when the check ran but failed.
 *
 * # Safety
 * Pointers must be valid; `cfg` from [`wl_config_parse`].
 */
enum WlStatus wl_compare(const struct WlConfig *cfg,
                         double *out_max_discrepancy,
                         int32_t *out_pass);

/**
 * Audit discrete energy conservation; writes the relative drift of the
 * conserved form, the instantaneous-energy oscillation amplitude, and the
 * stability flag.
 *
 * # Safety
 * Pointers must be valid; `cfg` from [`wl_config_parse`].
 */
enum WlStatus wl_energy_audit(const struct WlConfig *cfg,
                              double *out_relative_drift,
                              double *out_oscillation,
                              int32_t *out_stable);

/**
 * Largest generalized eigenvalue of the formulation's stability pencil and
 * the explicit step limit 2 / sqrt(lambda_max).
 *
 * # Safety
 * Pointers must be valid; `cfg` from [`wl_config_parse`].
 */
enum WlStatus wl_spectrum(const struct WlConfig *cfg, double *out_lambda_max, double *out_dt_max);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAVELAB_H */
