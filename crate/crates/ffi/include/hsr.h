#ifndef HSR_H
#define HSR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HsrStatus {
  HSR_STATUS_OK = 0,
  HSR_STATUS_NULL_POINTER = 1,
  HSR_STATUS_INVALID_ARGUMENT = 2,
  HSR_STATUS_IO = 3,
  HSR_STATUS_FORMAT = 4,
  HSR_STATUS_CONFIG = 5,
  HSR_STATUS_NUMERIC = 6,
  /**
   * The pipeline could not proceed on otherwise valid input.
   */
  HSR_STATUS_FAILED = 7,
  HSR_STATUS_BUFFER_TOO_SMALL = 8,
  HSR_STATUS_PANIC = 9,
} HsrStatus;

/**
 * A dataset with its optional query/gallery split.
 */
typedef struct HsrDataset HsrDataset;

typedef struct HsrModel HsrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *hsr_last_error(void);

/**
 * Generates the synthetic benchmark. `config` may be null for defaults.
 *
 * # Safety
 * `config` must be null or a NUL-terminated string; `out` must be writable.
 */
enum HsrStatus hsr_synth_generate(const char *config, uint64_t seed, struct HsrDataset **out);

/**
 * # Safety
 * `dir` must be a NUL-terminated path; `out` must be writable.
 */
enum HsrStatus hsr_dataset_load(const char *dir, struct HsrDataset **out);

/**
 * # Safety
 * `dataset` must come from this library; `dir` must be a NUL-terminated path.
 */
enum HsrStatus hsr_dataset_save(const struct HsrDataset *dataset, const char *dir);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or come from this library.
 */
size_t hsr_dataset_len(const struct HsrDataset *dataset);

/**
 * Width of one part block, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or come from this library.
 */
size_t hsr_dataset_part_dim(const struct HsrDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or an unfreed handle from this library.
 */
void hsr_dataset_free(struct HsrDataset *dataset);

/**
 * Untrained projector for `dataset`, as the training loop would start from it.
 *
 * # Safety
 * `dataset` must come from this library; `config` null or NUL-terminated; `out` writable.
 */
enum HsrStatus hsr_model_new(const struct HsrDataset *dataset,
                             const char *config,
                             uint64_t seed,
                             struct HsrModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated path; `out` must be writable.
 */
enum HsrStatus hsr_model_load(const char *path, struct HsrModel **out);

/**
 * # Safety
 * `model` must come from this library; `path` must be a NUL-terminated path.
 */
enum HsrStatus hsr_model_save(const struct HsrModel *model, const char *path);

/**
 * Embedding width, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t hsr_model_output_dim(const struct HsrModel *model);

/**
 * # Safety
 * `model` must be null or an unfreed handle from this library.
 */
void hsr_model_free(struct HsrModel *model);

/**
 * Writes the N x D_out row-major global embeddings into `out`.
 *
 * # Safety
 * Handles must come from this library; `out` must hold `out_len` floats.
 */
enum HsrStatus hsr_model_embed(const struct HsrModel *model,
                               const struct HsrDataset *dataset,
                               float *out,
                               size_t out_len);

/**
 * Runs the iterative training loop. `init` may be null to start from a fresh projector.
 *
 * # Safety
 * Handles must be null or come from this library; `config` null or NUL-terminated;
 * `out` must be writable.
 */
enum HsrStatus hsr_train(const struct HsrDataset *dataset,
                         const char *config,
                         uint64_t seed,
                         const struct HsrModel *init,
                         struct HsrModel **out);

/**
 * Rank-1 and mAP of `model` on the dataset's split.
 *
 * # Safety
 * Handles must come from this library; `r1` and `map` must be writable.
 */
enum HsrStatus hsr_evaluate(const struct HsrModel *model,
                            const struct HsrDataset *dataset,
                            double *r1,
                            double *map);

/**
 * DBSCAN over `n` rows of `d` floats; `eps <= 0` picks it automatically.
 * Writes one label per row (-1 for noise) and the number of clusters.
 *
 * # Safety
 * `features` must hold `n * d` floats, `labels` `n` ints; `num_clusters` may be null.
 */
enum HsrStatus hsr_dbscan(const float *features,
                          size_t n,
                          size_t d,
                          double eps,
                          size_t min_pts,
                          int32_t *labels,
                          size_t *num_clusters);

/**
 * Inter-camera mutual pairs with top-`k` lists. Writes up to `capacity` pairs as
 * `(anchor, partner)` into `pairs` (2 * capacity entries) and the total count into
 * `num_pairs`; returns `BufferTooSmall` when the total exceeds `capacity`.
 *
 * # Safety
 * `features` must hold `n * d` floats, `cameras` `n` values, `pairs` `2 * capacity`
 * entries (may be null when `capacity` is 0); `num_pairs` must be writable.
 */
enum HsrStatus hsr_mutual_pairs(const float *features,
                                size_t n,
                                size_t d,
                                const uint32_t *cameras,
                                size_t k,
                                size_t *pairs,
                                size_t capacity,
                                size_t *num_pairs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HSR_H */
