#ifndef MOTIONSCORE_H
#define MOTIONSCORE_H

/* Generated with cbindgen:0.27.0 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsDminRule {
  MS_DMIN_RULE_ZERO_FLOW = 0,
  MS_DMIN_RULE_DUPLICATED_GT = 1,
} MsDminRule;

/**
 * Which flow of a triplet a keyed request refers to.
 */
typedef enum MsFlowRole {
  /**
   * input to edited output
   */
  MS_FLOW_ROLE_PRED = 0,
  /**
   * input to ground truth
   */
  MS_FLOW_ROLE_GT = 1,
} MsFlowRole;

typedef enum MsStatus {
  MS_STATUS_OK = 0,
  MS_STATUS_NULL_ARGUMENT = 1,
  MS_STATUS_INVALID_ARGUMENT = 2,
  MS_STATUS_MISSING_FILE = 3,
  MS_STATUS_IO = 4,
  MS_STATUS_CORRUPT_DATA = 5,
  MS_STATUS_DIMENSION_MISMATCH = 6,
  MS_STATUS_INVALID_CONFIG = 7,
  MS_STATUS_UNRESOLVED_FLOW = 8,
  MS_STATUS_INTERNAL = 99,
} MsStatus;

/**
 * Opaque flow estimator.
 */
typedef struct MsEstimator MsEstimator;

/**
 * Opaque dense flow field (pixel displacements, row-major).
 */
typedef struct MsFlow MsFlow;

typedef struct MsLucasKanadeParams {
  size_t pyramid_levels;
  size_t window_radius;
  size_t iterations_per_level;
  double min_eigen;
} MsLucasKanadeParams;

typedef struct MsRewardParams {
  double q;
  double eps;
  double tau_m;
  double tau_move;
  double alpha;
  double beta_dir;
  double lambda_move;
  double d_max;
  size_t levels;
  enum MsDminRule d_min_rule;
} MsRewardParams;

typedef struct MsMasParams {
  double alpha;
  double d_min;
  double d_max;
  double rho_min;
} MsMasParams;

typedef struct MsRewardBreakdown {
  double d_mag;
  double d_dir;
  double m_move;
  double d_comb;
  double d_min_star;
  double d_tilde;
  double r_cont;
  double r_motion;
} MsRewardBreakdown;

typedef struct MsMasResult {
  double d_ovl;
  double mas;
  bool static_failure;
  /**
   * NaN when the ground truth is static.
   */
  double motion_ratio;
} MsMasResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failed call on this thread, or NULL. The
 * pointer stays valid until the next call into this library on the same
 * thread.
 */
const char *ms_last_error(void);

/**
 * Static, NUL-terminated name of a status code.
 */
const char *ms_status_name(enum MsStatus status);

/**
 * Library version, NUL-terminated.
 */
const char *ms_version(void);

/**
 * Build a flow from `width * height` horizontal and vertical components.
 *
 * # Safety
 * `u` and `v` must point to `width * height` readable doubles; `out` must
 * be writable. Release the result with [`ms_flow_free`].
 */
enum MsStatus ms_flow_new(size_t width,
                          size_t height,
                          const double *u,
                          const double *v,
                          struct MsFlow **out);

/**
 * Read a Middlebury `.flo` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum MsStatus ms_flow_read(const char *path, struct MsFlow **out);

/**
 * Write a Middlebury `.flo` file.
 *
 * # Safety
 * `flow` must come from this library; `path` must be NUL-terminated.
 */
enum MsStatus ms_flow_write(const struct MsFlow *flow, const char *path);

/**
 * Width in pixels; 0 for NULL.
 *
 * # Safety
 * `flow` must be NULL or come from this library.
 */
size_t ms_flow_width(const struct MsFlow *flow);

/**
 * Height in pixels; 0 for NULL.
 *
 * # Safety
 * `flow` must be NULL or come from this library.
 */
size_t ms_flow_height(const struct MsFlow *flow);

/**
 * Copy the components into caller buffers of `len` doubles each; `len`
 * must equal width * height. Either buffer may be NULL to skip it.
 *
 * # Safety
 * Non-NULL buffers must hold `len` writable doubles.
 */
enum MsStatus ms_flow_components(const struct MsFlow *flow, double *u, double *v, size_t len);

/**
 * Release a flow. NULL is ignored.
 *
 * # Safety
 * `flow` must be NULL or an unreleased handle from this library.
 */
void ms_flow_free(struct MsFlow *flow);

struct MsLucasKanadeParams ms_lucas_kanade_params_default(void);

/**
 * Pyramidal Lucas-Kanade estimator; NULL `params` selects the defaults.
 *
 * # Safety
 * `params` must be NULL or readable; `out` must be writable. Release the
 * result with [`ms_estimator_free`].
 */
enum MsStatus ms_estimator_lucas_kanade(const struct MsLucasKanadeParams *params,
                                        struct MsEstimator **out);

/**
 * Estimator that reads `<entry_id>__pred.flo` / `<entry_id>__gt.flo` from
 * `dir` (or `<dir>/<model>/` for per-model predictions). Use it with
 * [`ms_estimate_flow_keyed`].
 *
 * # Safety
 * `dir` must be NUL-terminated and `out` writable.
 */
enum MsStatus ms_estimator_precomputed(const char *dir, struct MsEstimator **out);

/**
 * Estimator that always returns zero flow.
 *
 * # Safety
 * `out` must be writable.
 */
enum MsStatus ms_estimator_zero(struct MsEstimator **out);

/**
 * Release an estimator. NULL is ignored.
 *
 * # Safety
 * `est` must be NULL or an unreleased handle from this library.
 */
void ms_estimator_free(struct MsEstimator *est);

/**
 * Flow from grayscale image `a` to `b`, both `width * height` row-major
 * doubles in `[0, 1]`.
 *
 * # Safety
 * `a` and `b` must hold `width * height` readable doubles; `out` must be
 * writable. Release the result with [`ms_flow_free`].
 */
enum MsStatus ms_estimate_flow(const struct MsEstimator *est,
                               size_t width,
                               size_t height,
                               const double *a,
                               const double *b,
                               struct MsFlow **out);

/**
 * Like [`ms_estimate_flow`] but identifies the pair, so precomputed
 * estimators can look it up. `model` may be NULL. `resized` (optional)
 * receives whether a stored flow was resampled to the image size.
 *
 * # Safety
 * As for [`ms_estimate_flow`]; `entry_id` must be NUL-terminated and
 * `model` NULL or NUL-terminated.
 */
enum MsStatus ms_estimate_flow_keyed(const struct MsEstimator *est,
                                     const char *entry_id,
                                     const char *model,
                                     enum MsFlowRole role,
                                     size_t width,
                                     size_t height,
                                     const double *a,
                                     const double *b,
                                     struct MsFlow **out,
                                     bool *resized);

struct MsRewardParams ms_reward_params_default(void);

struct MsMasParams ms_mas_params_default(void);

/**
 * Motion reward of predicted flow `pred` against ground truth `gt`. NULL
 * `params` selects the defaults.
 *
 * # Safety
 * Handles must come from this library; `params` NULL or readable; `out`
 * writable.
 */
enum MsStatus ms_motion_reward(const struct MsFlow *pred,
                               const struct MsFlow *gt,
                               const struct MsRewardParams *params,
                               struct MsRewardBreakdown *out);

/**
 * Motion Alignment Score in `[0, 100]`. NULL parameter pointers select the
 * defaults; the reward parameters supply `q` and `eps`.
 *
 * # Safety
 * Handles must come from this library; parameter pointers NULL or
 * readable; `out` writable.
 */
enum MsStatus ms_mas(const struct MsFlow *pred,
                     const struct MsFlow *gt,
                     const struct MsMasParams *mas_params,
                     const struct MsRewardParams *reward_params,
                     struct MsMasResult *out);

/**
 * Population standard deviation of every raw reward in a step, floored
 * away from zero.
 *
 * # Safety
 * `raw` must hold `len` readable doubles.
 */
enum MsStatus ms_global_reward_std(const double *raw, size_t len, double *out);

/**
 * Map one group's raw rewards to optimality rewards in `[0, 1]`, writing
 * `len` values to `out`. Groups need at least two members.
 *
 * # Safety
 * `raw` must hold `len` readable doubles and `out` `len` writable ones.
 */
enum MsStatus ms_optimality_reward(const double *raw, size_t len, double z_c, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOTIONSCORE_H */
