#ifndef POISONLAB_H
#define POISONLAB_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by fallible functions.
 */
typedef enum PoisonlabStatus {
  POISONLAB_STATUS_OK = 0,
  POISONLAB_STATUS_NULL_ARGUMENT = 1,
  POISONLAB_STATUS_INVALID_ARGUMENT = 2,
  POISONLAB_STATUS_RUNTIME_ERROR = 3,
  POISONLAB_STATUS_BUFFER_TOO_SMALL = 4,
} PoisonlabStatus;

/**
 * An in-memory tokenized dataset.
 */
typedef struct PoisonlabDataset PoisonlabDataset;

/**
 * Everything a defense run produced.
 */
typedef struct PoisonlabDefense PoisonlabDefense;

/**
 * A trained text classifier.
 */
typedef struct PoisonlabModel PoisonlabModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *poisonlab_last_error(void);

/**
 * Library version as a static string.
 */
const char *poisonlab_version(void);

/**
 * Load a dataset from `path`. `format` is 0 for JSONL, 1 for TSV. Returns
 * null on failure.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct PoisonlabDataset *poisonlab_dataset_load(const char *path, int format);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
uintptr_t poisonlab_dataset_len(const struct PoisonlabDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live dataset handle; the handle is consumed.
 */
void poisonlab_dataset_free(struct PoisonlabDataset *ds);

/**
 * Train a naive-Bayes classifier with the given smoothing. Returns null on
 * failure.
 *
 * # Safety
 * `ds` must be a live dataset handle.
 */
struct PoisonlabModel *poisonlab_model_train(const struct PoisonlabDataset *ds,
                                             double alpha,
                                             uint64_t seed);

/**
 * Predict the label of a whitespace-separated text; writes a NUL-terminated
 * label into `buf`.
 *
 * # Safety
 * `model` must be a live model handle, `text` a valid string, and `buf`
 * writable for `cap` bytes.
 */
enum PoisonlabStatus poisonlab_model_predict(const struct PoisonlabModel *model,
                                             const char *text,
                                             char *buf,
                                             uintptr_t cap);

/**
 * # Safety
 * `model` must be null or a live model handle; the handle is consumed.
 */
void poisonlab_model_free(struct PoisonlabModel *model);

/**
 * Run the full defense pipeline (train, score, distill with the linear bound
 * `k`,`b`, trace back, double check, sanitize, retrain). Returns null on
 * failure.
 *
 * # Safety
 * `ds` must be a live dataset handle.
 */
struct PoisonlabDefense *poisonlab_defend(const struct PoisonlabDataset *ds,
                                          double bound_k,
                                          double bound_b,
                                          double alpha,
                                          uint64_t seed);

/**
 * Number of distilled trigger words.
 *
 * # Safety
 * `d` must be null or a live defense handle.
 */
uintptr_t poisonlab_defense_num_triggers(const struct PoisonlabDefense *d);

/**
 * Copy the `index`-th distilled trigger (in sorted order) into `buf`.
 *
 * # Safety
 * `d` must be a live defense handle and `buf` writable for `cap` bytes.
 */
enum PoisonlabStatus poisonlab_defense_trigger(const struct PoisonlabDefense *d,
                                               uintptr_t index,
                                               char *buf,
                                               uintptr_t cap);

/**
 * Number of samples marked for removal.
 *
 * # Safety
 * `d` must be null or a live defense handle.
 */
uintptr_t poisonlab_defense_num_marked(const struct PoisonlabDefense *d);

/**
 * Classifier invocations consumed by the defense.
 *
 * # Safety
 * `d` must be null or a live defense handle.
 */
uint64_t poisonlab_defense_model_calls(const struct PoisonlabDefense *d);

/**
 * The sanitized dataset as a new owned handle (the defense handle keeps its
 * own copy). Returns null on a null handle.
 *
 * # Safety
 * `d` must be null or a live defense handle.
 */
struct PoisonlabDataset *poisonlab_defense_sanitized(const struct PoisonlabDefense *d);

/**
 * # Safety
 * `d` must be null or a live defense handle; the handle is consumed.
 */
void poisonlab_defense_free(struct PoisonlabDefense *d);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POISONLAB_H */
