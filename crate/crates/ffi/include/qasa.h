#ifndef QASA_H
#define QASA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QasaStatus {
  QASA_STATUS_OK = 0,
  QASA_STATUS_NULL_POINTER = 1,
  QASA_STATUS_INVALID_ARGUMENT = 2,
  QASA_STATUS_DIMENSION = 3,
  QASA_STATUS_CONFIG = 4,
  QASA_STATUS_IO = 5,
  QASA_STATUS_CHECKPOINT = 6,
  QASA_STATUS_NUMERIC = 7,
  QASA_STATUS_UNSUPPORTED = 8,
  QASA_STATUS_PANIC = 9,
} QasaStatus;

typedef enum QasaVariant {
  QASA_VARIANT_TRANSFORMER = 0,
  QASA_VARIANT_QASA_CLASSICAL = 1,
  QASA_VARIANT_QASA = 2,
} QasaVariant;

typedef enum QasaGradientEngine {
  QASA_GRADIENT_ENGINE_ADJOINT = 0,
  QASA_GRADIENT_ENGINE_PARAMETER_SHIFT = 1,
} QasaGradientEngine;

/**
 * Opaque QASA circuit handle.
 */
typedef struct QasaCircuit QasaCircuit;

/**
 * Opaque model handle.
 */
typedef struct QasaModel QasaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next `qasa_*` call on the same thread.
 */
const char *qasa_last_error_message(void);

/**
 * Static version string.
 */
const char *qasa_version(void);

/**
 * Desk-scale model of the given variant, initialised from `seed`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum QasaStatus qasa_model_new_desk(enum QasaVariant variant,
                                    uint64_t seed,
                                    struct QasaModel **out);

/**
 * Model from a JSON `ModelConfig`.
 *
 * # Safety
 * `json` must be a NUL-terminated string, `out` a valid pointer.
 */
enum QasaStatus qasa_model_from_json(const char *json, struct QasaModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string, `out` a valid pointer.
 */
enum QasaStatus qasa_model_load(const char *path, struct QasaModel **out);

/**
 * # Safety
 * `m` must come from a `qasa_model_*` constructor, `path` be NUL-terminated.
 */
enum QasaStatus qasa_model_save(const struct QasaModel *m, const char *path);

/**
 * # Safety
 * `m` must be a live handle, `out` a valid pointer.
 */
enum QasaStatus qasa_model_seq_len(const struct QasaModel *m, size_t *out);

/**
 * Total scalar parameter count.
 *
 * # Safety
 * `m` must be a live handle, `out` a valid pointer.
 */
enum QasaStatus qasa_model_num_params(const struct QasaModel *m, size_t *out);

/**
 * Predicts `batch` windows stored row-major in `windows`
 * (`batch * seq_len` values) into `out` (`batch` values).
 *
 * # Safety
 * Buffers must hold the stated number of values.
 */
enum QasaStatus qasa_model_predict(const struct QasaModel *m,
                                   const double *windows,
                                   size_t batch,
                                   size_t seq_len,
                                   double *out);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void qasa_model_free(struct QasaModel *m);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum QasaStatus qasa_circuit_new(size_t qubits,
                                 size_t layers,
                                 enum QasaGradientEngine engine,
                                 struct QasaCircuit **out);

/**
 * Number of trainable angles, `layers * (2 * qubits + 1)`.
 *
 * # Safety
 * `c` must be a live handle, `out` a valid pointer.
 */
enum QasaStatus qasa_circuit_num_params(const struct QasaCircuit *c, size_t *out);

/**
 * Writes `⟨Z_0⟩..⟨Z_{n-1}⟩` into `out` (capacity `out_len`).
 *
 * # Safety
 * Buffers must hold the stated number of values.
 */
enum QasaStatus qasa_circuit_forward(const struct QasaCircuit *c,
                                     const double *theta,
                                     size_t theta_len,
                                     const double *inputs,
                                     size_t inputs_len,
                                     double *out,
                                     size_t out_len);

/**
 * Expectations (`n`), input Jacobian (`n × n`, row-major) and angle
 * Jacobian (`n × num_params`, row-major).
 *
 * # Safety
 * `outputs`, `d_inputs` and `d_theta` must hold the sizes above.
 */
enum QasaStatus qasa_circuit_jacobians(const struct QasaCircuit *c,
                                       const double *theta,
                                       size_t theta_len,
                                       const double *inputs,
                                       size_t inputs_len,
                                       double *outputs,
                                       double *d_inputs,
                                       double *d_theta);

/**
 * # Safety
 * `c` must be null or a handle not yet freed.
 */
void qasa_circuit_free(struct QasaCircuit *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QASA_H */
