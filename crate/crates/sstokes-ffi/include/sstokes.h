#ifndef SSTOKES_H
#define SSTOKES_H

/* generated by cbindgen from the sstokes-ffi crate; do not edit */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum SsStatus {
  SsStatus_Ok = 0,
  SsStatus_InvalidArgument = 1,
  SsStatus_OutOfDomain = 2,
  SsStatus_Config = 3,
  SsStatus_Singular = 4,
  SsStatus_NonFinite = 5,
  SsStatus_Io = 6,
  SsStatus_Parse = 7,
  SsStatus_Panic = 8,
} SsStatus;

/**
 * Study axis selector for [`ss_run_study`].
 */
typedef enum SsStudyKind {
  SsStudyKind_Time = 0,
  SsStudyKind_Space = 1,
} SsStudyKind;

/**
 * Opaque mesh handle.
 */
typedef struct SsMesh SsMesh;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static C string.
 */
const char *ss_version(void);

/**
 * Copies the last error message into `buf` (truncated to `cap - 1` bytes)
 * and returns the full message length.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null (then only the
 * length is returned).
 */
uintptr_t ss_last_error(char *buf, uintptr_t cap);

/**
 * Builds the uniform triangulation with `n` cells per side.
 *
 * # Safety
 * `out` must be a valid pointer to an `SsMesh*` slot.
 */
enum SsStatus ss_mesh_new(uintptr_t n, struct SsMesh **out);

/**
 * Releases a mesh handle. Null is ignored.
 *
 * # Safety
 * `mesh` must have been produced by [`ss_mesh_new`] and not freed before.
 */
void ss_mesh_free(struct SsMesh *mesh);

/**
 * Reports vertex count, triangle count, and the mesh size `h = 1/n`.
 *
 * # Safety
 * All pointers must be valid or null (null outputs are skipped).
 */
enum SsStatus ss_mesh_info(const struct SsMesh *mesh,
                           uintptr_t *out_vertices,
                           uintptr_t *out_triangles,
                           double *out_h);

/**
 * Locates `(x, y)` on the mesh: writes the containing triangle index and the
 * three barycentric coordinates.
 *
 * # Safety
 * `out_bary` must point to three writable doubles; other pointers must be
 * valid.
 */
enum SsStatus ss_mesh_locate(const struct SsMesh *mesh,
                             double x,
                             double y,
                             uintptr_t *out_triangle,
                             double *out_bary);

/**
 * Evaluates the pointwise diffusion matrix `B(u)`; writes 4 doubles in
 * row-major order.
 *
 * # Safety
 * `out` must point to four writable doubles.
 */
enum SsStatus ss_eval_b(double u1, double u2, double *out);

/**
 * Least-squares slope of `log2(errors)` against `log2(scales)`.
 *
 * # Safety
 * `errors` and `scales` must point to `len` doubles; outputs must be valid.
 */
enum SsStatus ss_fit_rate(const double *errors,
                          const double *scales,
                          uintptr_t len,
                          double *out_slope,
                          double *out_residual);

/**
 * Runs a convergence study configured by flat `key=value` text (same keys
 * as the CLI config file), writes the results/samples/slopes files into the
 * configured output directory, and reports the fitted slopes.
 *
 * Either output pointer may be null. Slopes are NaN when fewer than three
 * levels were run.
 *
 * # Safety
 * `config_text` must be a valid NUL-terminated string.
 */
enum SsStatus ss_run_study(enum SsStudyKind kind,
                           const char *config_text,
                           double *out_velocity_slope,
                           double *out_pressure_slope);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SSTOKES_H */
