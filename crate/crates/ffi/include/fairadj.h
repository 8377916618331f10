/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef FAIRADJ_H
#define FAIRADJ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define FA_TASK_REGRESSION 0

#define FA_TASK_CLASSIFICATION 1

#define FA_LEARNER_LINEAR 0

#define FA_LEARNER_BOOSTED 1

#define FA_PENALTY_ADVERSARIAL 0

#define FA_PENALTY_GAP 1

#define FA_PENALTY_GAP_SQUARED 2

typedef enum FaStatus {
  FA_STATUS_OK = 0,
  FA_STATUS_NULL_POINTER = 1,
  FA_STATUS_INVALID_ARGUMENT = 2,
  FA_STATUS_IO = 3,
  // Malformed or inconsistent data: CSV, schema, labels, groups, lengths.
  FA_STATUS_DATA = 4,
  // Rank deficiency, divergence or non-finite values during training.
  FA_STATUS_NUMERICAL = 5,
  FA_STATUS_MODEL_FORMAT = 6,
  // The penalty needs true labels and none were available.
  FA_STATUS_LABELS_REQUIRED = 7,
  FA_STATUS_PANIC = 8,
} FaStatus;

// Opaque dataset handle.
typedef struct FaDataset FaDataset;

// Opaque model handle: a trained model with its metadata.
typedef struct FaModel FaModel;

// Training settings. Start from `fa_train_options_default`.
typedef struct FaTrainOptions {
  // `FA_TASK_*`
  uint32_t task;
  // `FA_LEARNER_*`
  uint32_t learner;
  // `FA_PENALTY_*`
  uint32_t penalty;
  double lambda;
  size_t rounds;
  size_t max_depth;
  double learning_rate;
  double l2_reg;
  double min_child_weight;
  double adversary_step;
  size_t adversary_steps;
} FaTrainOptions;

typedef struct FaEvaluation {
  double accuracy;
  // NaN when the unprotected group has no favorable predictions.
  double disparate_impact;
  double rate_protected;
  double rate_unprotected;
} FaEvaluation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fa_version(void);

// Message of the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *fa_last_error(void);

// Fills `out` with the library defaults for `task`.
//
// # Safety
// `out` must be NULL or point to writable memory for one `FaTrainOptions`.
enum FaStatus fa_train_options_default(uint32_t task_code, struct FaTrainOptions *out);

// Builds a dataset from row-major features `x` (`n x d`), labels and a 0/1
// protected indicator. Features are named `x0`, `x1`, ...
//
// # Safety
// `x` must hold `n * d` doubles, `labels` `n` doubles and `protected` `n`
// bytes; `out` must be writable.
enum FaStatus fa_dataset_new(const double *x,
                             size_t n,
                             size_t d,
                             const double *labels,
                             const uint8_t *protected_,
                             uint8_t favorable,
                             uint32_t task_code,
                             struct FaDataset **out);

// Loads dataset `name` from the manifest in `data_dir` (NULL: the default
// data directory).
//
// # Safety
// String arguments must be NULL or NUL-terminated; `out` must be writable.
enum FaStatus fa_dataset_load(const char *data_dir, const char *name, struct FaDataset **out);

// Row count, or 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live dataset handle.
size_t fa_dataset_rows(const struct FaDataset *ds);

// Feature count, or 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live dataset handle.
size_t fa_dataset_cols(const struct FaDataset *ds);

// Copies the row-major feature matrix into `out` (`rows * cols` doubles).
//
// # Safety
// `ds` must be a live handle and `out` must have room for the matrix.
enum FaStatus fa_dataset_features(const struct FaDataset *ds, double *out);

// # Safety
// `ds` must be NULL or a handle from this library not yet freed.
void fa_dataset_free(struct FaDataset *ds);

// Trains the unconstrained baseline.
//
// # Safety
// Handles must be live; `opts` must point to an options struct; `out` must be writable.
enum FaStatus fa_train_baseline(const struct FaDataset *ds,
                                const struct FaTrainOptions *opts,
                                struct FaModel **out);

// Trains a model with the fairness penalty in its objective.
//
// # Safety
// As for `fa_train_baseline`.
enum FaStatus fa_train_joint(const struct FaDataset *ds,
                             const struct FaTrainOptions *opts,
                             struct FaModel **out);

// Trains an offset model on top of `baseline`. Labels in `ds` are read only
// by penalties that need them.
//
// # Safety
// As for `fa_train_baseline`; `baseline` must be a live model handle.
enum FaStatus fa_train_adjuster(const struct FaModel *baseline,
                                const struct FaDataset *ds,
                                const struct FaTrainOptions *opts,
                                struct FaModel **out);

// Raw scores (logits for classification) of `n` rows into `out`.
//
// # Safety
// `x` must hold `n * d` doubles and `out` `n` doubles.
enum FaStatus fa_model_predict(const struct FaModel *model,
                               const double *x,
                               size_t n,
                               size_t d,
                               double *out);

// Baseline plus adjuster scores.
//
// # Safety
// As for `fa_model_predict`.
enum FaStatus fa_model_predict_adjusted(const struct FaModel *baseline,
                                        const struct FaModel *adjuster,
                                        const double *x,
                                        size_t n,
                                        size_t d,
                                        double *out);

// Number of input features, or 0 for NULL.
//
// # Safety
// `model` must be NULL or a live model handle.
size_t fa_model_n_features(const struct FaModel *model);

// `FA_TASK_*` of the model, or `UINT32_MAX` for NULL.
//
// # Safety
// `model` must be NULL or a live model handle.
uint32_t fa_model_task(const struct FaModel *model);

// Writes the model as a JSON model file.
//
// # Safety
// `model` must be live and `path` NUL-terminated.
enum FaStatus fa_model_save(const struct FaModel *model, const char *path);

// Reads a JSON model file.
//
// # Safety
// `path` must be NUL-terminated and `out` writable.
enum FaStatus fa_model_load(const char *path, struct FaModel **out);

// # Safety
// `model` must be NULL or a handle from this library not yet freed.
void fa_model_free(struct FaModel *model);

// Accuracy and disparate impact of logits against 0/1 labels.
//
// # Safety
// `logits` and `labels` must hold `n` doubles, `protected` `n` bytes;
// `out` must be writable.
enum FaStatus fa_evaluate(const double *logits,
                          const double *labels,
                          const uint8_t *protected_,
                          size_t n,
                          uint8_t favorable,
                          struct FaEvaluation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAIRADJ_H */
