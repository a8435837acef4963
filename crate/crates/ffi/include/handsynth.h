#ifndef HANDSYNTH_H
#define HANDSYNTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Error values match the CLI exit codes.
 */
typedef enum HsStatus {
  HS_STATUS_OK = 0,
  HS_STATUS_CONFIG = 2,
  HS_STATUS_IO = 3,
  HS_STATUS_DIVERGENCE = 4,
  HS_STATUS_DEGENERATE_GEOMETRY = 5,
  HS_STATUS_DATA = 6,
  /**
   * Null pointer, bad UTF-8 or an out-of-range argument.
   */
  HS_STATUS_INVALID_ARGUMENT = 7,
  /**
   * A panic was caught at the boundary.
   */
  HS_STATUS_INTERNAL = 8,
} HsStatus;

typedef enum HsSide {
  HS_SIDE_RIGHT = 0,
  HS_SIDE_LEFT = 1,
} HsSide;

/**
 * Opaque pipeline configuration.
 */
typedef struct HsConfig HsConfig;

/**
 * Opaque pair of hand models.
 */
typedef struct HsModels HsModels;

/**
 * Outcome of [`hs_run_all`].
 */
typedef struct HsRunSummary {
  size_t jobs;
  size_t passed;
  size_t rejected;
  size_t diverged;
  /**
   * Pass rate; NaN for an empty batch.
   */
  double yield_rate;
  double input_contact_rate;
  double output_contact_rate;
  size_t library_poses;
  size_t annotation_records;
} HsRunSummary;

/**
 * Outcome of [`hs_eval`], millimeters.
 */
typedef struct HsMetrics {
  size_t samples;
  double mpjpe;
  double pampjpe;
  double smpjpe;
  double mrrpe;
  /**
   * NaN when no sample has a ground-truth contact.
   */
  double cdev;
  size_t cdev_samples;
} HsMetrics;

/**
 * One hand's pose: 45 finger angles (finger-major, joint-minor, then bend,
 * splay, twist), a row-major root rotation matrix and the root translation.
 */
typedef struct HsPose {
  double angles[45];
  double root_rotation[9];
  double root_translation[3];
} HsPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *hs_version(void);

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *hs_last_error(void);

/**
 * Built-in default configuration.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum HsStatus hs_config_default(struct HsConfig **out);

/**
 * Reads and validates a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum HsStatus hs_config_load(const char *path, struct HsConfig **out);

/**
 * # Safety
 * `cfg` must be a live handle; `path` a NUL-terminated string.
 */
enum HsStatus hs_config_set_out_dir(struct HsConfig *cfg, const char *path);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum HsStatus hs_config_set_seed(struct HsConfig *cfg, uint64_t seed);

/**
 * Worker threads for batch stages; 0 uses every core.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum HsStatus hs_config_set_workers(struct HsConfig *cfg, size_t workers);

/**
 * Releases a configuration; null is ignored.
 *
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void hs_config_free(struct HsConfig *cfg);

/**
 * Runs every stage into the configured output directory.
 *
 * # Safety
 * `cfg` must be a live handle; `out` writable.
 */
enum HsStatus hs_run_all(const struct HsConfig *cfg, struct HsRunSummary *out);

/**
 * Metrics of predictions against ground-truth annotations (files or directories).
 *
 * # Safety
 * `cfg` must be a live handle; paths NUL-terminated; `out` writable.
 */
enum HsStatus hs_eval(const struct HsConfig *cfg,
                      const char *gt,
                      const char *pred,
                      struct HsMetrics *out);

/**
 * Both hand models with default proportions.
 *
 * # Safety
 * `out` must be writable.
 */
enum HsStatus hs_models_new(struct HsModels **out);

/**
 * Releases models; null is ignored.
 *
 * # Safety
 * `models` must be null or a handle not yet freed.
 */
void hs_models_free(struct HsModels *models);

/**
 * # Safety
 * `models` must be a live handle; `out` writable.
 */
enum HsStatus hs_models_vertex_count(const struct HsModels *models, enum HsSide side, size_t *out);

/**
 * Zero angles, identity rotation, zero translation.
 *
 * # Safety
 * `out` must be writable.
 */
enum HsStatus hs_pose_rest(struct HsPose *out);

/**
 * The 21 keypoints (16 joints then 5 fingertips) as 63 consecutive x, y, z values.
 *
 * # Safety
 * `models` live, `pose` readable, `out` writable for 63 doubles.
 */
enum HsStatus hs_keypoints(const struct HsModels *models,
                           enum HsSide side,
                           const struct HsPose *pose,
                           double *out);

/**
 * Posed mesh vertices as consecutive x, y, z values. `capacity` is the length
 * of `out` in doubles and must be at least three times the vertex count.
 *
 * # Safety
 * `models` live, `pose` readable, `out` writable for `capacity` doubles.
 */
enum HsStatus hs_vertices(const struct HsModels *models,
                          enum HsSide side,
                          const struct HsPose *pose,
                          double *out,
                          size_t capacity);

/**
 * Validity filter on one pair: joint limits and the brute-force penetration
 * depth against `tolerance` (meters). `passed` gets 1 or 0.
 *
 * # Safety
 * `models` live; `right`, `left` readable; `passed`, `depth` writable.
 */
enum HsStatus hs_check_pair(const struct HsModels *models,
                            const struct HsPose *right,
                            const struct HsPose *left,
                            double tolerance,
                            uint8_t *passed,
                            double *depth);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HANDSYNTH_H */
