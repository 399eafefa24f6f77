/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef ROOTLET_LEVELS_H
#define ROOTLET_LEVELS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RlShape {
  RL_SHAPE_BALL = 0,
  RL_SHAPE_CUBE = 1,
  RL_SHAPE_CROSS = 2,
} RlShape;

typedef enum RlStatus {
  RL_STATUS_OK = 0,
  RL_STATUS_IO = 1,
  RL_STATUS_FORMAT = 2,
  RL_STATUS_UNSUPPORTED = 3,
  RL_STATUS_GEOMETRY = 4,
  RL_STATUS_CONTRACT = 5,
  RL_STATUS_DEGENERATE = 6,
  RL_STATUS_ARGUMENT = 7,
  RL_STATUS_RANGE = 8,
  RL_STATUS_NULL_POINTER = 9,
  RL_STATUS_PANIC = 10,
  RL_STATUS_OTHER = 11,
} RlStatus;

/**
 * Opaque label map.
 */
typedef struct RlLabelMap RlLabelMap;

/**
 * Opaque level analysis result.
 */
typedef struct RlLevels RlLevels;

typedef struct RlLevelOptions {
  /**
   * Dilation radius in voxels.
   */
  uint32_t dilate_radius;
  enum RlShape shape;
  /**
   * Odd moving-average window for the centerline.
   */
  size_t smoothing_window;
} RlLevelOptions;

/**
 * One level. Slices are -1 and distances NaN when `empty` is set.
 */
typedef struct RlLevelExtent {
  uint8_t level;
  bool empty;
  bool clipped_at_volume_edge;
  bool clamped_to_centerline;
  int64_t rostral_slice;
  int64_t caudal_slice;
  int64_t mid_slice;
  double pmj_rostral_mm;
  double pmj_mid_mm;
  double pmj_caudal_mm;
  double length_mm;
} RlLevelExtent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *rl_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rl_version(void);

struct RlLevelOptions rl_level_options_default(void);

/**
 * Reads a NIfTI-1 label map (`.nii` or `.nii.gz`).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RlStatus rl_labelmap_read(const char *path, struct RlLabelMap **out);

/**
 * Builds a label map from `dims[0]·dims[1]·dims[2]` bytes in x-fastest order
 * on an axis-aligned RAS grid with the given spacing.
 *
 * # Safety
 * `dims` and `spacing` must point to 3 values, `data` to the full buffer.
 */
enum RlStatus rl_labelmap_from_buffer(const size_t *dims,
                                      const double *spacing,
                                      const uint8_t *data,
                                      struct RlLabelMap **out);

/**
 * # Safety
 * `map` must come from this library or be NULL.
 */
void rl_labelmap_free(struct RlLabelMap *map);

/**
 * # Safety
 * `map` must be a live handle and `out_dims` point to 3 writable values.
 */
enum RlStatus rl_labelmap_dims(const struct RlLabelMap *map, size_t *out_dims);

/**
 * Runs the level pipeline. `pmj_mm` is the PMJ in world coordinates (3
 * values); `options` may be NULL for defaults.
 *
 * # Safety
 * Handles must be live, `pmj_mm` must point to 3 values and `out` be writable.
 */
enum RlStatus rl_levels_compute(const struct RlLabelMap *rootlets,
                                const struct RlLabelMap *cord,
                                const double *pmj_mm,
                                const struct RlLevelOptions *options,
                                struct RlLevels **out);

/**
 * Number of levels in the result (always 7, C2–C8).
 *
 * # Safety
 * `levels` must be a live handle or NULL.
 */
size_t rl_levels_count(const struct RlLevels *levels);

/**
 * # Safety
 * `levels` must be a live handle and `out` writable.
 */
enum RlStatus rl_levels_get(const struct RlLevels *levels, size_t index, struct RlLevelExtent *out);

/**
 * Writes the level CSV report.
 *
 * # Safety
 * `levels` must be a live handle; `subject` and `path` NUL-terminated strings.
 */
enum RlStatus rl_levels_write_csv(const struct RlLevels *levels,
                                  const char *subject,
                                  const char *path);

/**
 * # Safety
 * `levels` must come from this library or be NULL.
 */
void rl_levels_free(struct RlLevels *levels);

/**
 * Dice overlap of the nonzero voxels of two maps on the same grid.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum RlStatus rl_dice(const struct RlLabelMap *pred, const struct RlLabelMap *truth, double *out);

/**
 * Coefficient of variation in percent; sample sd unless `population`.
 *
 * # Safety
 * `values` must point to `n` doubles and `out` be writable.
 */
enum RlStatus rl_cov(const double *values, size_t n, bool population, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROOTLET_LEVELS_H */
