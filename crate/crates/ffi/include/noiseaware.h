#ifndef NOISEAWARE_H
#define NOISEAWARE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values are stable.
 */
typedef enum NaStatus {
  NA_STATUS_OK = 0,
  NA_STATUS_INVALID_ARGUMENT = 1,
  NA_STATUS_INVALID_STATE = 2,
  NA_STATUS_IO = 3,
  NA_STATUS_PARSE = 4,
  NA_STATUS_CHECKSUM = 5,
  NA_STATUS_FORMAT = 6,
  NA_STATUS_DIVERGED = 7,
  NA_STATUS_OUTPUT_EXISTS = 8,
  NA_STATUS_NULL_POINTER = 9,
  NA_STATUS_PANIC = 10,
} NaStatus;

/**
 * Opaque model handle.
 */
typedef struct NaModel NaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The pointer
 * stays valid until the next call into this library from the same thread.
 */
const char *na_last_error_message(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *na_version(void);

/**
 * Loads a checkpoint. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum NaStatus na_model_load(const char *path, struct NaModel **out);

/**
 * Releases a handle from [`na_model_load`]. Null is ignored.
 *
 * # Safety
 * `model` must be null or a live handle not freed before.
 */
void na_model_free(struct NaModel *model);

/**
 * Writes the expected input height and width.
 *
 * # Safety
 * All pointers must be valid.
 */
enum NaStatus na_model_input_size(const struct NaModel *model, size_t *height, size_t *width);

/**
 * Channels of the prediction: 2 logits for segmentation, 1 for reconstruction.
 * `*has_log_variance` is 1 for dual-head models.
 *
 * # Safety
 * All pointers must be valid.
 */
enum NaStatus na_model_outputs(const struct NaModel *model,
                               size_t *channels,
                               int32_t *has_log_variance);

/**
 * Deterministic forward pass on `n` images of the model's input size.
 * `prediction` receives `n·C·H·W` values; `log_variance` receives `n·H·W`
 * values and may be null (it must be null for single-head models).
 *
 * # Safety
 * Buffers must be valid for the stated lengths.
 */
enum NaStatus na_model_forward(const struct NaModel *model,
                               const double *input_ptr,
                               size_t n,
                               double *prediction,
                               size_t prediction_len,
                               double *log_variance,
                               size_t log_variance_len);

/**
 * `samples` dropout passes. `mean` receives `n·C·H·W` mean softmax
 * probabilities (or values); `variance` receives `n·H·W` unbiased variances.
 *
 * # Safety
 * Buffers must be valid for the stated lengths.
 */
enum NaStatus na_model_mc_dropout(const struct NaModel *model,
                                  const double *input_ptr,
                                  size_t n,
                                  size_t samples,
                                  uint64_t seed,
                                  double *mean,
                                  size_t mean_len,
                                  double *variance,
                                  size_t variance_len);

/**
 * Dice coefficient of two masks.
 *
 * # Safety
 * Masks must hold `height·width` bytes; `out` must be valid.
 */
enum NaStatus na_dice(const uint8_t *pred,
                      const uint8_t *gt,
                      size_t height,
                      size_t width,
                      double *out);

/**
 * Jaccard index of two masks.
 *
 * # Safety
 * Masks must hold `height·width` bytes; `out` must be valid.
 */
enum NaStatus na_jaccard(const uint8_t *pred,
                         const uint8_t *gt,
                         size_t height,
                         size_t width,
                         double *out);

/**
 * Fraction of `patch × patch` blocks whose majority labels differ.
 *
 * # Safety
 * Masks must hold `height·width` bytes; `out` must be valid.
 */
enum NaStatus na_patch_err(const uint8_t *pred,
                           const uint8_t *gt,
                           size_t height,
                           size_t width,
                           size_t patch,
                           double *out);

/**
 * Hit and mistake coefficients relative to the ground-truth area.
 *
 * # Safety
 * Masks must hold `height·width` bytes; outputs must be valid.
 */
enum NaStatus na_hit_mistake(const uint8_t *pred,
                             const uint8_t *gt,
                             size_t height,
                             size_t width,
                             double *hc,
                             double *mc);

/**
 * PSNR in dB; identical images give `+INFINITY`.
 *
 * # Safety
 * Images must hold `height·width` values; `out` must be valid.
 */
enum NaStatus na_psnr(const double *a,
                      const double *b,
                      size_t height,
                      size_t width,
                      double max_val,
                      double *out);

/**
 * Mean variance over foreground, background, correct and incorrect pixels,
 * written to `means[0..4]` in that order; an empty partition yields NaN.
 *
 * # Safety
 * Inputs must hold `height·width` elements; `means` must hold 4 doubles.
 */
enum NaStatus na_uncertainty_stats(const double *variance,
                                   const uint8_t *gt,
                                   const uint8_t *pred,
                                   size_t height,
                                   size_t width,
                                   double *means);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NOISEAWARE_H */
