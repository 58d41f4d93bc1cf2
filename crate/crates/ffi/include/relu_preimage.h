#ifndef RELU_PREIMAGE_H
#define RELU_PREIMAGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `RP_STATUS_OK` is zero.
 */
typedef enum RpStatus {
  RP_STATUS_OK = 0,
  RP_STATUS_INVALID_INPUT = 1,
  RP_STATUS_DIMENSION_MISMATCH = 2,
  RP_STATUS_INVALID_PROBLEM = 3,
  RP_STATUS_SOLVER_STALLED = 4,
  RP_STATUS_DEGENERATE_SPECTRUM = 5,
  RP_STATUS_NOT_A_RELU_OUTPUT = 6,
  RP_STATUS_INCONSISTENT_OUTPUT = 7,
  RP_STATUS_BUDGET_EXCEEDED = 8,
  RP_STATUS_PROBE_INFEASIBLE = 9,
  RP_STATUS_DEGENERATE_ROW = 10,
  RP_STATUS_NOTHING_REMOVED = 11,
  RP_STATUS_IO = 12,
  RP_STATUS_PARSE = 13,
  RP_STATUS_NULL_POINTER = 14,
  RP_STATUS_BUFFER_TOO_SMALL = 15,
  RP_STATUS_PANIC = 16,
} RpStatus;

typedef enum RpPreimageKind {
  RP_PREIMAGE_KIND_SINGLETON = 0,
  RP_PREIMAGE_KIND_FINITE_VOLUME = 1,
  RP_PREIMAGE_KIND_INFINITE_VOLUME = 2,
} RpPreimageKind;

/**
 * Opaque model handle.
 */
typedef struct RpModel RpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *rp_last_error_message(void);

/**
 * Static name of a status code.
 */
const char *rp_status_name(enum RpStatus status);

/**
 * Loads a model file. On success `*out` owns a handle to release with
 * `rp_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RpStatus rp_model_load(const char *path, struct RpModel **out);

/**
 * Parses a model from the bytes of a model file.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes and `out` must be valid.
 */
enum RpStatus rp_model_parse(const uint8_t *bytes, size_t len, struct RpModel **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `model` must come from `rp_model_load` or `rp_model_parse` and not have
 * been freed.
 */
void rp_model_free(struct RpModel *model);

/**
 * Number of layers, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t rp_model_num_layers(const struct RpModel *model);

/**
 * Weight shape of layer `layer` (1-based).
 *
 * # Safety
 * `model` must be a live handle; `rows` and `cols` valid pointers.
 */
enum RpStatus rp_model_layer_dims(const struct RpModel *model,
                                  size_t layer,
                                  size_t *rows,
                                  size_t *cols);

/**
 * Network output for input `x`.
 *
 * # Safety
 * `x` must hold `x_len` values and `out` room for `out_len`.
 */
enum RpStatus rp_model_forward(const struct RpModel *model,
                               const double *x,
                               size_t x_len,
                               double *out,
                               size_t out_len);

/**
 * Classifies the preimage of output `y` under layer `layer`. When the
 * preimage is a single point and `point` is not NULL, the point is written
 * there (`point_len` must cover the layer's input size).
 *
 * # Safety
 * `y` must hold `y_len` values, `kind` must be valid, `point` NULL or room
 * for `point_len` values.
 */
enum RpStatus rp_classify(const struct RpModel *model,
                          size_t layer,
                          const double *y,
                          size_t y_len,
                          enum RpPreimageKind *kind,
                          double *point,
                          size_t point_len);

/**
 * Whether the `rows x cols` matrix `a` is omnidirectional.
 *
 * # Safety
 * `a` must hold `rows * cols` values and `is_omni` must be valid.
 */
enum RpStatus rp_omni(const double *a, size_t rows, size_t cols, bool *is_omni);

/**
 * Exact affine map `F(x) = A_P x + b_P` of the activation region holding
 * `x`. `a_p` receives the `output_dim x input_dim` matrix row-major.
 *
 * # Safety
 * `x` must hold `x_len` values; `a_p` and `b_p` must have room for
 * `a_len` and `b_len` values.
 */
enum RpStatus rp_linearize(const struct RpModel *model,
                           const double *x,
                           size_t x_len,
                           double *a_p,
                           size_t a_len,
                           double *b_p,
                           size_t b_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELU_PREIMAGE_H */
