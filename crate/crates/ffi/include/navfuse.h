#ifndef NAVFUSE_H
#define NAVFUSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NfStatus {
  NF_STATUS_OK = 0,
  NF_STATUS_NULL_POINTER = 1,
  NF_STATUS_INVALID_UTF8 = 2,
  NF_STATUS_INVALID_JSON = 3,
  NF_STATUS_INVALID_ARGUMENT = 4,
  /**
   * The episode could not be scored (for example a disconnected goal).
   */
  NF_STATUS_INVALID_EPISODE = 5,
  NF_STATUS_INTERNAL = 6,
} NfStatus;

/**
 * Opaque suite configuration.
 */
typedef struct NfConfig NfConfig;

/**
 * Opaque parsed episode.
 */
typedef struct NfEpisode NfEpisode;

typedef struct NfEpisodeResult {
  bool success;
  bool stopped;
  double ne;
  double tl;
  double spl;
  double geodesic;
  size_t steps;
  size_t collisions;
} NfEpisodeResult;

typedef struct NfLimits {
  double v_max;
  double omega_max;
  double dt_ctrl;
} NfLimits;

typedef struct NfPose {
  double x;
  double y;
  double theta;
} NfPose;

typedef struct NfAction {
  double dx;
  double dy;
  double dtheta;
  double kappa;
  bool is_stop;
} NfAction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *nf_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next navfuse call on the same thread.
 */
const char *nf_last_error_message(void);

/**
 * Parses a versioned episode document.
 *
 * # Safety
 * `json` must be NULL or a NUL-terminated string; `out` must be NULL or
 * writable.
 */
enum NfStatus nf_episode_from_json(const char *json, struct NfEpisode **out);

/**
 * # Safety
 * `ep` must be NULL or a handle from [`nf_episode_from_json`] not yet freed.
 */
void nf_episode_free(struct NfEpisode *ep);

/**
 * Reference configuration, or a partial JSON config merged over it when
 * `json` is not NULL.
 *
 * # Safety
 * `json` must be NULL or a NUL-terminated string; `out` must be NULL or
 * writable.
 */
enum NfStatus nf_config_from_json(const char *json, struct NfConfig **out);

/**
 * # Safety
 * `cfg` must be NULL or a handle from [`nf_config_from_json`] not yet freed.
 */
void nf_config_free(struct NfConfig *cfg);

/**
 * Runs one episode. A noisy model is calibrated on this episode alone.
 *
 * # Safety
 * `ep` and `cfg` must be live handles or NULL; `out` must be NULL or
 * writable.
 */
enum NfStatus nf_run_episode(const struct NfEpisode *ep,
                             const struct NfConfig *cfg,
                             uint64_t motion_seed,
                             uint64_t noise_seed,
                             struct NfEpisodeResult *out);

/**
 * Like [`nf_run_episode`] and also returns the JSONL step log in `log_out`
 * (free with [`nf_string_free`]). `out` may be NULL.
 *
 * # Safety
 * As [`nf_run_episode`]; `log_out` must be NULL or writable.
 */
enum NfStatus nf_run_episode_log(const struct NfEpisode *ep,
                                 const struct NfConfig *cfg,
                                 uint64_t motion_seed,
                                 uint64_t noise_seed,
                                 struct NfEpisodeResult *out,
                                 char **log_out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library not yet freed.
 */
void nf_string_free(char *s);

/**
 * Default platform limits.
 */
struct NfLimits nf_default_limits(void);

/**
 * Integrates `n` actions from `start` into `out_poses[0..n]`. `limits`
 * may be NULL for the defaults.
 *
 * # Safety
 * `actions` must point to `n` readable actions and `out_poses` to `n`
 * writable poses.
 */
enum NfStatus nf_integrate_poses(const struct NfPose *start,
                                 const struct NfAction *actions,
                                 size_t n,
                                 const struct NfLimits *limits,
                                 struct NfPose *out_poses);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NAVFUSE_H */
