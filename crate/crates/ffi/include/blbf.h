#ifndef BLBF_H
#define BLBF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum BlbfStatus {
  BLBF_STATUS_OK = 0,
  BLBF_STATUS_NULL_ARGUMENT = 1,
  BLBF_STATUS_INVALID_ARGUMENT = 2,
  BLBF_STATUS_IO = 3,
  BLBF_STATUS_FORMAT = 4,
  BLBF_STATUS_ESTIMATION = 5,
  BLBF_STATUS_PANIC = 6,
} BlbfStatus;

/**
 * An impression log held in memory.
 */
typedef struct BlbfLog BlbfLog;

/**
 * A policy that can be evaluated on a log.
 */
typedef struct BlbfPolicy BlbfPolicy;

/**
 * Counts from [`blbf_generate`].
 */
typedef struct BlbfSummary {
  /**
   * Impressions before sub-sampling.
   */
  uint64_t impressions;
  uint64_t kept;
  uint64_t clicked;
  double keep_prob;
} BlbfSummary;

/**
 * Estimates for one policy. Intervals are symmetric at the requested `z`.
 */
typedef struct BlbfEstimate {
  double n_hat;
  double ips;
  double snips;
  double c_hat;
  double se_ips;
  double se_snips;
  double se_c_hat;
  double ips_lower;
  double ips_upper;
  double snips_lower;
  double snips_upper;
  double c_hat_lower;
  double c_hat_upper;
  uint64_t kept;
  uint64_t clicked;
} BlbfEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *blbf_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *blbf_last_error(void);

/**
 * Reads a log file, gzip or plain. In lenient mode malformed impressions
 * are skipped.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BlbfStatus blbf_log_read(const char *path, bool strict, struct BlbfLog **out);

/**
 * Writes a log; a path ending in `.gz` is gzip-compressed.
 *
 * # Safety
 * `log` must come from this library and `path` be NUL-terminated.
 */
enum BlbfStatus blbf_log_write(const struct BlbfLog *log, const char *path);

/**
 * Kept impressions in the log; 0 for NULL.
 *
 * # Safety
 * `log` must be NULL or come from this library.
 */
size_t blbf_log_len(const struct BlbfLog *log);

/**
 * Clicked impressions in the log; 0 for NULL.
 *
 * # Safety
 * `log` must be NULL or come from this library.
 */
size_t blbf_log_clicked(const struct BlbfLog *log);

/**
 * # Safety
 * `log` must be NULL or come from this library, and is invalid afterwards.
 */
void blbf_log_free(struct BlbfLog *log);

/**
 * Simulates a log from `key=value` world settings (`seed` is required).
 * `logging` receives the logging replica and may be NULL; so may `summary`.
 *
 * # Safety
 * `config` must be NUL-terminated and `log` a valid pointer.
 */
enum BlbfStatus blbf_generate(const char *config,
                              struct BlbfLog **log,
                              struct BlbfPolicy **logging,
                              struct BlbfSummary *summary);

/**
 * Loads a policy file written by the command-line tool.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` a valid pointer.
 */
enum BlbfStatus blbf_policy_read(const char *path, struct BlbfPolicy **out);

/**
 * The uniformly random ranking policy.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum BlbfStatus blbf_policy_uniform(struct BlbfPolicy **out);

/**
 * `(1 - epsilon) * base + epsilon * uniform`. `base` stays owned by the
 * caller.
 *
 * # Safety
 * `base` must come from this library and `out` be a valid pointer.
 */
enum BlbfStatus blbf_policy_mixture(const struct BlbfPolicy *base,
                                    double epsilon,
                                    struct BlbfPolicy **out);

/**
 * # Safety
 * `policy` must be NULL or come from this library, and is invalid
 * afterwards.
 */
void blbf_policy_free(struct BlbfPolicy *policy);

/**
 * IPS, SNIPS and control-variate estimates of `policy` on `log`, whose
 * unclicked impressions were kept with probability `keep_prob`.
 *
 * # Safety
 * Handles must come from this library and `out` be a valid pointer.
 */
enum BlbfStatus blbf_evaluate(const struct BlbfLog *log,
                              const struct BlbfPolicy *policy,
                              double keep_prob,
                              double z,
                              struct BlbfEstimate *out);

/**
 * Estimates of every `epsilon` mixture of `logging` with the uniform
 * policy. `out` must hold `count` entries.
 *
 * # Safety
 * Handles must come from this library; `epsilons` and `out` must point to
 * `count` elements each.
 */
enum BlbfStatus blbf_sweep(const struct BlbfLog *log,
                           const struct BlbfPolicy *logging,
                           const double *epsilons,
                           size_t count,
                           double keep_prob,
                           double z,
                           struct BlbfEstimate *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLBF_H */
