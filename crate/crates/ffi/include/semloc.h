#ifndef SEMLOC_H
#define SEMLOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SemlocStatus {
  SEMLOC_STATUS_OK = 0,
  SEMLOC_STATUS_NULL_POINTER = 1,
  SEMLOC_STATUS_INVALID_ARGUMENT = 2,
  SEMLOC_STATUS_IO = 3,
  SEMLOC_STATUS_FORMAT = 4,
  /**
   * The computation produced no usable result (pixel above the horizon,
   * empty map, non-finite residuals).
   */
  SEMLOC_STATUS_NO_RESULT = 5,
  /**
   * Caller buffer too small; the required size was still reported.
   */
  SEMLOC_STATUS_BUFFER_TOO_SMALL = 6,
  SEMLOC_STATUS_PANIC = 7,
} SemlocStatus;

/**
 * Opaque online localizer bound to one map.
 */
typedef struct SemlocLocalizer SemlocLocalizer;

/**
 * Opaque semantic map.
 */
typedef struct SemlocMap SemlocMap;

typedef struct SemlocIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
  double skew;
  uint32_t width;
  uint32_t height;
} SemlocIntrinsics;

/**
 * Point in the levelled camera frame: x right, y down (equal to the
 * camera height), z forward.
 */
typedef struct SemlocGroundPoint {
  double x;
  double y;
  double z;
} SemlocGroundPoint;

/**
 * Radians.
 */
typedef struct SemlocAttitude {
  double roll;
  double pitch;
  double yaw;
} SemlocAttitude;

/**
 * Translation and unit quaternion (x, y, z, w).
 */
typedef struct SemlocPose {
  double tx;
  double ty;
  double tz;
  double qx;
  double qy;
  double qz;
  double qw;
} SemlocPose;

/**
 * Trajectory metrics as written by the command-line `evaluate`.
 */
typedef struct SemlocMetrics {
  size_t frames;
  double ate_trans;
  double ate_rot_deg;
  double ate_yaw_deg;
  double rpe_trans;
  /**
   * Percent of frames within (0.25 m, 2 deg), (0.5 m, 5 deg), (5 m, 10 deg).
   */
  double recall[3];
  double lateral_rmse;
  double longitudinal_rmse;
  double heading_rmse_deg;
} SemlocMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the last error message on this thread, excluding
 * the terminator.
 */
size_t semloc_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * `len - 1` bytes). Returns the number of bytes copied.
 *
 * # Safety
 * `buf` must be valid for `len` bytes of writes.
 */
size_t semloc_last_error_message(char *buf, size_t len);

/**
 * Static, NUL-terminated library version.
 */
const char *semloc_version(void);

/**
 * Flat-ground lifting for a level camera at height `h`.
 *
 * # Safety
 * `k` and `out` must be valid pointers.
 */
enum SemlocStatus semloc_ipm_vanilla(const struct SemlocIntrinsics *k,
                                     double h,
                                     double u,
                                     double v,
                                     struct SemlocGroundPoint *out);

/**
 * Attitude-compensated lifting. `deviation` is the fixed mount offset,
 * `attitude` the per-frame angles; `max_range` <= 0 disables the range
 * cut.
 *
 * # Safety
 * `k`, `deviation`, `attitude` and `out` must be valid pointers.
 */
enum SemlocStatus semloc_ipm_enhanced(const struct SemlocIntrinsics *k,
                                      double h,
                                      const struct SemlocAttitude *deviation,
                                      const struct SemlocAttitude *attitude,
                                      double max_range,
                                      double u,
                                      double v,
                                      struct SemlocGroundPoint *out);

/**
 * Loads a map file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SemlocStatus semloc_map_load(const char *path, struct SemlocMap **out);

/**
 * Parses a map from NUL-terminated text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SemlocStatus semloc_map_parse(const char *text, struct SemlocMap **out);

/**
 * # Safety
 * `map` must come from this library and not be used afterwards.
 */
void semloc_map_free(struct SemlocMap *map);

/**
 * # Safety
 * `map` must be null or a live handle.
 */
size_t semloc_map_lane_count(const struct SemlocMap *map);

/**
 * # Safety
 * `map` must be null or a live handle.
 */
size_t semloc_map_pole_count(const struct SemlocMap *map);

/**
 * Nearest lane point to `(x, y, z)`. `out_xyz` receives three doubles.
 *
 * # Safety
 * `map` must be a live handle, `out_xyz` valid for three doubles and
 * `out_distance` valid or null.
 */
enum SemlocStatus semloc_map_nearest(const struct SemlocMap *map,
                                     double x,
                                     double y,
                                     double z,
                                     double *out_xyz,
                                     double *out_distance);

/**
 * Lane points within `radius` of `(x, y, z)`, nearest first, written as
 * xyz triples into `out_xyz` (room for `capacity` points). `out_count`
 * always receives the total number found.
 *
 * # Safety
 * `map` must be a live handle, `out_xyz` valid for `3 * capacity` doubles
 * (or null when `capacity` is 0) and `out_count` a valid pointer.
 */
enum SemlocStatus semloc_map_query_radius(const struct SemlocMap *map,
                                          double x,
                                          double y,
                                          double z,
                                          double radius,
                                          double *out_xyz,
                                          size_t capacity,
                                          size_t *out_count);

/**
 * Creates a localizer from a config file holding `camera.*`, `mount.*`
 * and optional solver keys. The map is copied.
 *
 * # Safety
 * `map` must be a live handle, `config_path` NUL-terminated and `out`
 * valid.
 */
enum SemlocStatus semloc_localizer_new(const struct SemlocMap *map,
                                       const char *config_path,
                                       struct SemlocLocalizer **out);

/**
 * # Safety
 * `loc` must come from this library and not be used afterwards.
 */
void semloc_localizer_free(struct SemlocLocalizer *loc);

/**
 * Localizes one frame. `pixels` holds `n_pixels` (u, v) pairs of lane
 * pixels; `pole_lines` holds `n_lines` records of (a, b, c, v_min, v_max)
 * with a·u + b·v + c = 0. Returns `NoResult` with the odometry prior in
 * `out` when the frame could not be constrained.
 *
 * # Safety
 * `loc`, `odometry`, `attitude` and `out` must be valid; `pixels` and
 * `pole_lines` valid for the stated counts (may be null when zero).
 */
enum SemlocStatus semloc_localizer_step(struct SemlocLocalizer *loc,
                                        double timestamp,
                                        const struct SemlocPose *odometry,
                                        const struct SemlocAttitude *attitude,
                                        const double *pixels,
                                        size_t n_pixels,
                                        const double *pole_lines,
                                        size_t n_lines,
                                        struct SemlocPose *out);

/**
 * Compares two trajectory files.
 *
 * # Safety
 * Paths must be NUL-terminated strings and `out` valid.
 */
enum SemlocStatus semloc_evaluate_files(const char *est_path,
                                        const char *gt_path,
                                        struct SemlocMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMLOC_H */
