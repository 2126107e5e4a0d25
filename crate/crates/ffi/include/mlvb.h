#ifndef MLVB_H
#define MLVB_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MlvbStatus {
  MLVB_STATUS_OK = 0,
  MLVB_STATUS_NULL_POINTER = 1,
  MLVB_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad configuration, schema or input data.
   */
  MLVB_STATUS_INVALID_INPUT = 3,
  /**
   * Singular system, non-SPD block or other numerical failure.
   */
  MLVB_STATUS_NUMERICAL = 4,
  MLVB_STATUS_IO = 5,
  /**
   * Output buffer has the wrong length.
   */
  MLVB_STATUS_BUFFER_SIZE = 6,
  MLVB_STATUS_PANIC = 7,
} MlvbStatus;

/**
 * Opaque dataset handle.
 */
typedef struct MlvbDataset MlvbDataset;

/**
 * Opaque fit handle.
 */
typedef struct MlvbFit MlvbFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or NULL. Valid until
 * the next failing call on the same thread.
 */
const char *mlvb_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mlvb_version(void);

/**
 * Load a CSV file described by a JSON schema.
 *
 * # Safety
 * `path` and `schema_json` must be NUL-terminated strings and `out` a valid
 * pointer. On success `*out` owns a dataset to release with
 * [`mlvb_dataset_free`].
 */
enum MlvbStatus mlvb_dataset_load_csv(const char *path,
                                      const char *schema_json,
                                      struct MlvbDataset **out);

/**
 * Simulate a dataset from a JSON simulation design (NULL for the default).
 *
 * # Safety
 * `sim_json` must be NULL or a NUL-terminated string and `out` a valid
 * pointer.
 */
enum MlvbStatus mlvb_dataset_simulate(const char *sim_json, struct MlvbDataset **out);

/**
 * # Safety
 * `ds` must be NULL or a handle from this library not yet freed.
 */
void mlvb_dataset_free(struct MlvbDataset *ds);

/**
 * Number of fixed effects, groups and observations.
 *
 * # Safety
 * `ds` must be a live dataset handle; each output pointer may be NULL.
 */
enum MlvbStatus mlvb_dataset_dims(const struct MlvbDataset *ds,
                                  size_t *p,
                                  size_t *m,
                                  size_t *n_obs);

/**
 * Fit the model. `prior_json` follows the `prior` section of the CLI config
 * and `options_json` the `fit` section; NULL selects the defaults.
 *
 * # Safety
 * `ds` must be a live dataset handle, the JSON arguments NULL or
 * NUL-terminated, and `out` a valid pointer. On success `*out` owns a fit to
 * release with [`mlvb_fit_free`].
 */
enum MlvbStatus mlvb_fit(const struct MlvbDataset *ds,
                         const char *prior_json,
                         const char *options_json,
                         struct MlvbFit **out);

/**
 * # Safety
 * `fit` must be NULL or a handle from this library not yet freed.
 */
void mlvb_fit_free(struct MlvbFit *fit);

/**
 * Sweeps run and whether the tolerance was met.
 *
 * # Safety
 * `fit` must be a live fit handle; output pointers may be NULL.
 */
enum MlvbStatus mlvb_fit_status(const struct MlvbFit *fit, size_t *iterations, bool *converged);

/**
 * Copy the posterior mean and standard deviation of β (length p each).
 *
 * # Safety
 * `fit` must be a live fit handle; `mean` and `sd` must each be NULL or
 * point to `len` writable doubles.
 */
enum MlvbStatus mlvb_fit_beta(const struct MlvbFit *fit, double *mean, double *sd, size_t len);

/**
 * SAVS selection over the S coefficients: writes 1 for selected and 0
 * otherwise into `gamma` (length p_S), and the sparsified estimates into
 * `estimate` if it is not NULL.
 *
 * # Safety
 * `fit` must be a live fit handle, `gamma` point to `len` writable bytes,
 * and `estimate` be NULL or point to `len` writable doubles.
 */
enum MlvbStatus mlvb_fit_select(const struct MlvbFit *fit,
                                uint8_t *gamma,
                                double *estimate,
                                size_t len);

/**
 * Posterior summaries of β and u as a JSON document owned by the fit
 * handle (valid until the handle is freed).
 *
 * # Safety
 * `fit` must be a live fit handle and `out` a valid pointer.
 */
enum MlvbStatus mlvb_fit_summary_json(struct MlvbFit *fit, double level, const char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MLVB_H */
