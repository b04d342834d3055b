#ifndef MOLDFLUX_H
#define MOLDFLUX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum MfStatus {
  MF_OK = 0,
  MF_INVALID_ARGUMENT = 1,
  MF_NULL_POINTER = 2,
  MF_BUFFER_TOO_SMALL = 3,
  MF_OUT_OF_DOMAIN = 4,
  MF_NO_CONVERGENCE = 5,
  MF_SINGULAR = 6,
  MF_NOT_SPD = 7,
  MF_STAGNATION = 8,
  MF_INTEGRITY = 9,
  MF_UNSUPPORTED_VERSION = 10,
  MF_IO = 11,
  MF_CONFIG = 12,
  MF_PANIC = 13,
} MfStatus;

/**
 * A precomputed parameterization for one case.
 */
typedef struct MfArtifact MfArtifact;

/**
 * An inverse problem: grid, physics, sensors, clean readings and true flux.
 */
typedef struct MfCase MfCase;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mf_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t mf_last_error_message(char *buf, size_t cap);

/**
 * Analytical benchmark on an `nx × ny × nz` grid with `sensors_per_side²`
 * sensors on the plane `y = 0.2`.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum MfStatus mf_case_analytical(size_t nx,
                                 size_t ny,
                                 size_t nz,
                                 size_t sensors_per_side,
                                 struct MfCase **out);

/**
 * Industrial benchmark at desk resolution, or full resolution when `full != 0`.
 * Readings are synthesized by a direct solve.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum MfStatus mf_case_industrial(int32_t full, struct MfCase **out);

/**
 * # Safety
 * `case` must be null or a handle from this library, not yet freed.
 */
void mf_case_free(struct MfCase *case_);

/**
 * Number of faces on the hot face, i.e. the length of a flux vector.
 *
 * # Safety
 * `case` must be null or a valid handle.
 */
size_t mf_case_flux_len(const struct MfCase *case_);

/**
 * # Safety
 * `case` must be null or a valid handle.
 */
size_t mf_case_sensor_count(const struct MfCase *case_);

/**
 * Sensor coordinates as `x0 y0 z0 x1 ...` (`3 × count` values).
 *
 * # Safety
 * `case` must be a valid handle; `xyz` must hold `cap` doubles.
 */
enum MfStatus mf_case_sensors(const struct MfCase *case_, double *xyz, size_t cap);

/**
 * Noise-free sensor readings of the benchmark.
 *
 * # Safety
 * `case` must be a valid handle; `out` must hold `cap` doubles.
 */
enum MfStatus mf_case_clean_readings(const struct MfCase *case_, double *out, size_t cap);

/**
 * True flux of the benchmark on the hot-face faces.
 *
 * # Safety
 * `case` must be a valid handle; `out` must hold `cap` doubles.
 */
enum MfStatus mf_case_reference_flux(const struct MfCase *case_, double *out, size_t cap);

/**
 * Offline stage: one Gaussian basis function per sensor with shape `eta`.
 *
 * # Safety
 * `case` must be a valid handle; `out` a valid handle slot.
 */
enum MfStatus mf_offline_build(const struct MfCase *case_, double eta, struct MfArtifact **out);

/**
 * # Safety
 * `artifact` must be null or a handle from this library, not yet freed.
 */
void mf_artifact_free(struct MfArtifact *artifact);

/**
 * # Safety
 * `artifact` must be a valid handle; `path` a NUL-terminated UTF-8 string.
 */
enum MfStatus mf_artifact_save(const struct MfArtifact *artifact, const char *path);

/**
 * Loads an artifact, checking its format version and checksum.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` a valid handle slot.
 */
enum MfStatus mf_artifact_load(const char *path, struct MfArtifact **out);

/**
 * `MF_INTEGRITY` unless the artifact was built for exactly this case.
 *
 * # Safety
 * Both handles must be valid.
 */
enum MfStatus mf_artifact_verify(const struct MfArtifact *artifact, const struct MfCase *case_);

/**
 * Number of basis functions (weights).
 *
 * # Safety
 * `artifact` must be null or a valid handle.
 */
size_t mf_artifact_basis_len(const struct MfArtifact *artifact);

/**
 * Number of hot-face faces of the artifact's grid.
 *
 * # Safety
 * `artifact` must be null or a valid handle.
 */
size_t mf_artifact_flux_len(const struct MfArtifact *artifact);

/**
 * Online stage: weights from `n` readings.
 *
 * `tsvd_alpha == 0` selects the plain LU solve, otherwise truncated SVD keeping
 * that many singular values. `p_g > 0` adds the total-heat term with measured
 * total heat `g_hat`.
 *
 * # Safety
 * `artifact` must be valid; `t_hat` must hold `n` doubles, `w_out` `w_cap` doubles.
 */
enum MfStatus mf_online_solve(const struct MfArtifact *artifact,
                              const double *t_hat,
                              size_t n,
                              size_t tsvd_alpha,
                              double p_g,
                              double g_hat,
                              double *w_out,
                              size_t w_cap);

/**
 * Flux on the hot-face faces for weights `w`.
 *
 * # Safety
 * `artifact` must be valid; `w` must hold `m` doubles, `g_out` `g_cap` doubles.
 */
enum MfStatus mf_reconstruct(const struct MfArtifact *artifact,
                             const double *w,
                             size_t m,
                             double *g_out,
                             size_t g_cap);

/**
 * Relative L² and L∞ error of `g` against the case's true flux.
 *
 * # Safety
 * `case` must be valid; `g` must hold `n` doubles; `l2` and `linf` must be writable.
 */
enum MfStatus mf_case_flux_error(const struct MfCase *case_,
                                 const double *g,
                                 size_t n,
                                 double *l2,
                                 double *linf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOLDFLUX_H */
