/* Generated by cbindgen; do not edit. */

#ifndef PLENOPTIC_BOUNDS_H
#define PLENOPTIC_BOUNDS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum PbStatus {
  PB_STATUS_OK = 0,
  /**
   * A required pointer was null or a string was not UTF-8.
   */
  PB_STATUS_INVALID_INPUT = 1,
  /**
   * Document or config did not match its schema.
   */
  PB_STATUS_SCHEMA = 2,
  /**
   * A domain invariant or argument check failed.
   */
  PB_STATUS_INVALID = 3,
  /**
   * Rendering or a numerical routine failed.
   */
  PB_STATUS_RUNTIME = 4,
  PB_STATUS_IO = 5,
  /**
   * Internal panic, caught at the boundary.
   */
  PB_STATUS_PANIC = 6,
} PbStatus;

/**
 * Radiance image.
 */
typedef struct PbImage PbImage;

/**
 * Parsed scene.
 */
typedef struct PbScene PbScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *pb_last_error(void);

/**
 * Parses and validates a JSON scene document.
 *
 * # Safety
 * `document` must be a NUL-terminated string; `out` must be writable.
 */
enum PbStatus pb_scene_parse(const char *document, struct PbScene **out_scene);

/**
 * # Safety
 * `scene` must be null or a handle from [`pb_scene_parse`], freed once.
 */
void pb_scene_free(struct PbScene *scene);

/**
 * Number of θ components the scene's parameter space declares.
 *
 * # Safety
 * `scene` must be a live handle; `out_dim` writable.
 */
enum PbStatus pb_scene_parameter_dim(const struct PbScene *scene, size_t *out_dim);

/**
 * Binds θ and renders with `spp` samples per pixel from `seed`, tracing
 * paths of at most `depth` bounces (0 selects the default).
 *
 * # Safety
 * `theta` must point to `theta_len` doubles; `out_image` writable.
 */
enum PbStatus pb_scene_render(const struct PbScene *scene,
                              const double *theta,
                              size_t theta_len,
                              uint32_t spp,
                              uint64_t seed,
                              uint32_t depth,
                              struct PbImage **out_image);

/**
 * Image from row-major, channel-interleaved values.
 *
 * # Safety
 * `data` must point to `width * height * channels` doubles.
 */
enum PbStatus pb_image_new(size_t width,
                           size_t height,
                           size_t channels,
                           const double *data,
                           struct PbImage **out_image);

/**
 * # Safety
 * `image` must be null or a live handle, freed once.
 */
void pb_image_free(struct PbImage *image);

/**
 * Writes width, height and channel count.
 *
 * # Safety
 * All pointers must be valid.
 */
enum PbStatus pb_image_shape(const struct PbImage *image,
                             size_t *width,
                             size_t *height,
                             size_t *channels);

/**
 * Copies the image values into `buffer`, which must hold exactly
 * width·height·channels doubles.
 *
 * # Safety
 * `buffer` must point to `len` writable doubles.
 */
enum PbStatus pb_image_copy_data(const struct PbImage *image, double *buffer, size_t len);

/**
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out_image` writable.
 */
enum PbStatus pb_pfm_read(const char *path, struct PbImage **out_image);

/**
 * Values must be representable in single precision.
 *
 * # Safety
 * `image` must be live; `path` a NUL-terminated UTF-8 string.
 */
enum PbStatus pb_pfm_write(const struct PbImage *image, const char *path);

/**
 * Poisson divergence exponent between two rate images.
 *
 * # Safety
 * Handles must be live; `out_lambda` writable.
 */
enum PbStatus pb_lambda_poisson(const struct PbImage *a,
                                const struct PbImage *b,
                                double *out_lambda);

/**
 * Gaussian divergence exponent with noise standard deviation `sigma`.
 *
 * # Safety
 * Handles must be live; `out_lambda` writable.
 */
enum PbStatus pb_lambda_gaussian(const struct PbImage *a,
                                 const struct PbImage *b,
                                 double sigma,
                                 double *out_lambda);

/**
 * Δ² / (e^λ − 1); `+INFINITY` when λ = 0.
 *
 * # Safety
 * `out_value` must be writable.
 */
enum PbStatus pb_hcr_functional(double lambda, double delta, double *out_value);

/**
 * Least-squares fit of λ̃_i = λ + C/N_i with weights N_i. Writes the
 * clamped intercept, the slope, and whether clamping occurred.
 *
 * # Safety
 * `spp` and `lambda_tilde` must point to `len` values; outputs writable.
 */
enum PbStatus pb_estimate_lambda(const uint32_t *spp,
                                 const double *lambda_tilde,
                                 size_t len,
                                 double *out_lambda,
                                 double *out_slope,
                                 bool *out_clamped);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLENOPTIC_BOUNDS_H */
