#ifndef EPICAST_H
#define EPICAST_H

/* Generated by cbindgen from epicast-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum EcStatus {
  EC_STATUS_OK = 0,
  EC_STATUS_CONFIG_ERROR = 2,
  EC_STATUS_INGEST_ERROR = 3,
  EC_STATUS_NUMERIC_ERROR = 4,
  EC_STATUS_IO_ERROR = 5,
  EC_STATUS_NULL_POINTER = 6,
  EC_STATUS_PANIC = 7,
} EcStatus;

/**
 * Opaque date-aligned multi-modal dataset handle.
 */
typedef struct EcDataset EcDataset;

/**
 * Opaque trained-model handle; remembers the training protocol it was
 * produced with so evaluation reuses the same split and normalization.
 */
typedef struct EcModel EcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or NULL if none was recorded.
 * The pointer stays valid until the next failing call on the thread.
 */
const char *ec_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ec_version(void);

/**
 * Load and date-align the modalities. `embeddings_path` may be NULL for
 * statistics-plus-stringency datasets.
 *
 * # Safety
 * Path arguments must be NUL-terminated strings; `out` must be non-NULL.
 */
enum EcStatus ec_dataset_load(const char *stats_path,
                              const char *stringency_path,
                              const char *embeddings_path,
                              uint32_t roc_period,
                              struct EcDataset **out);

/**
 * Generate a synthetic dataset. `synth_toml` is the body of a `[synth]`
 * table (TOML key/value lines) or NULL for the defaults.
 *
 * # Safety
 * `out` must be non-NULL; `synth_toml` NUL-terminated when given.
 */
enum EcStatus ec_dataset_synth(const char *synth_toml, struct EcDataset **out);

/**
 * Number of aligned days, or 0 for a NULL handle.
 *
 * # Safety
 * `ds` must be NULL or a live dataset handle.
 */
size_t ec_dataset_days(const struct EcDataset *ds);

/**
 * Number of graph nodes (0 when the dataset has no embedding modality).
 *
 * # Safety
 * `ds` must be NULL or a live dataset handle.
 */
size_t ec_dataset_nodes(const struct EcDataset *ds);

/**
 * # Safety
 * `ds` must come from a dataset constructor and not be freed twice.
 */
void ec_dataset_free(struct EcDataset *ds);

/**
 * Train a model on the dataset. `run_toml` holds `[model]` and optional
 * `[train]` tables (the same schema as the CLI config document); `seed`
 * and `horizon` override the corresponding fields.
 *
 * # Safety
 * `ds`, `run_toml`, and `out` must be valid non-NULL pointers.
 */
enum EcStatus ec_train(const struct EcDataset *ds,
                       const char *run_toml,
                       uint64_t seed,
                       uint32_t horizon,
                       struct EcModel **out);

/**
 * # Safety
 * `model` and `path` must be valid non-NULL pointers.
 */
enum EcStatus ec_model_save(const struct EcModel *model, const char *path);

/**
 * Load a checkpoint; evaluation will use the default training protocol
 * (last 20% of days as test, 10% of the rest as validation).
 *
 * # Safety
 * `path` and `out` must be valid non-NULL pointers.
 */
enum EcStatus ec_model_load(const char *path, struct EcModel **out);

/**
 * Forecast horizon of the model in days (0 for a NULL handle).
 *
 * # Safety
 * `model` must be NULL or a live model handle.
 */
uint32_t ec_model_horizon(const struct EcModel *model);

/**
 * Targets predicted per day (0 for a NULL handle).
 *
 * # Safety
 * `model` must be NULL or a live model handle.
 */
size_t ec_model_output_dim(const struct EcModel *model);

/**
 * Macro-averaged test metrics of the model on the dataset's chronological
 * test split. Any output pointer may be NULL to skip that metric; MAPE and
 * R² come back as NaN when undefined.
 *
 * # Safety
 * `model` and `ds` must be valid handles.
 */
enum EcStatus ec_model_evaluate(const struct EcModel *model,
                                const struct EcDataset *ds,
                                double *mae,
                                double *rmse,
                                double *mape,
                                double *r2);

/**
 * Forecast from the window ending on the dataset's last day. Writes one
 * de-normalized value per target; `out_len` must equal the model's output
 * dimension.
 *
 * # Safety
 * `model`, `ds`, and `out` must be valid; `out` must hold `out_len` doubles.
 */
enum EcStatus ec_model_predict_latest(const struct EcModel *model,
                                      const struct EcDataset *ds,
                                      double *out,
                                      size_t out_len);

/**
 * # Safety
 * `model` must come from a model constructor and not be freed twice.
 */
void ec_model_free(struct EcModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EPICAST_H */
