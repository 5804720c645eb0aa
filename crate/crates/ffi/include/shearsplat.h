#ifndef SHEARSPLAT_H
#define SHEARSPLAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ShsStatus {
  SHS_STATUS_OK = 0,
  SHS_STATUS_NULL_POINTER = 1,
  SHS_STATUS_INVALID_ARGUMENT = 2,
  SHS_STATUS_BUFFER_TOO_SMALL = 3,
  SHS_STATUS_PARSE = 4,
  SHS_STATUS_IO = 5,
  SHS_STATUS_CONFIG = 6,
  SHS_STATUS_DEGENERATE = 7,
  SHS_STATUS_PANIC = 8,
} ShsStatus;

// A loaded checkpoint. Create with `shs_model_load` or `shs_model_load_bytes`, release with `shs_model_free`.
typedef struct ShsModel ShsModel;

// One Gaussian conditioned on a time. `cov` is row-major 3×3.
typedef struct ShsSlice {
  double mean[3];
  double cov[9];
  double opacity;
  double rgb[3];
  double temporal_weight;
} ShsSlice;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// Valid until the next call into this library from the same thread.
const char *shs_last_error(void);

// Library version as a static NUL-terminated string.
const char *shs_version(void);

// Loads a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum ShsStatus shs_model_load(const char *path, struct ShsModel **out);

// Loads a checkpoint from memory.
//
// # Safety
// `data` must point to `len` readable bytes; `out` must be writable.
enum ShsStatus shs_model_load_bytes(const uint8_t *data, size_t len, struct ShsModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from a load function and not be used afterwards.
void shs_model_free(struct ShsModel *model);

// # Safety
// `model` must be a live handle; `out` must be writable.
enum ShsStatus shs_model_gaussian_count(const struct ShsModel *model, size_t *out);

// # Safety
// `model` must be a live handle; `out` must be writable.
enum ShsStatus shs_model_camera_count(const struct ShsModel *model, size_t *out);

// Image size of one of the checkpoint's cameras.
//
// # Safety
// `model` must be a live handle; `width` and `height` must be writable.
enum ShsStatus shs_model_image_size(const struct ShsModel *model,
                                    size_t camera,
                                    size_t *width,
                                    size_t *height);

// Renders camera `camera` at time `t` into `rgb` as row-major RGB doubles in [0, 1].
//
// # Safety
// `model` must be a live handle; `rgb` must hold `len` doubles.
enum ShsStatus shs_model_render(const struct ShsModel *model,
                                size_t camera,
                                double t,
                                double *rgb,
                                size_t len);

// Like `shs_model_render` but quantized to bytes exactly as the PPM writer does.
//
// # Safety
// `model` must be a live handle; `rgb` must hold `len` bytes.
enum ShsStatus shs_model_render_rgb8(const struct ShsModel *model,
                                     size_t camera,
                                     double t,
                                     uint8_t *rgb,
                                     size_t len);

// Slices Gaussian `index` at `t`. `*visible` is 0 when it is culled, and `out` is then left untouched.
//
// # Safety
// `model` must be a live handle; `out` and `visible` must be writable.
enum ShsStatus shs_model_slice(const struct ShsModel *model,
                               size_t index,
                               double t,
                               struct ShsSlice *out,
                               uint8_t *visible);

// Temporal Schur complement of a 4×4 covariance (row-major; the upper triangle is read) into `out` (3×3 row-major).
//
// # Safety
// `cov` must hold 16 doubles and `out` 9.
enum ShsStatus shs_schur_tt(const double *cov,
                            double *out);

// `V Σ Vᵀ` for the Galilean shear with velocity `v` (3 doubles), written as a full 4×4 row-major matrix.
//
// # Safety
// `cov` must hold 16 doubles, `v` 3 and `out` 16.
enum ShsStatus shs_congruence_shear(const double *cov,
                                    const double *v,
                                    double *out);

// Mean (3) and covariance (3×3 row-major) of the 4D Gaussian `(mean, cov)` conditioned on time `t`.
//
// # Safety
// `mean` must hold 4 doubles, `cov` 16, `mean_out` 3 and `cov_out` 9.
enum ShsStatus shs_conditional_moments(const double *mean,
                                       const double *cov,
                                       double t,
                                       double *mean_out,
                                       double *cov_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHEARSPLAT_H */
