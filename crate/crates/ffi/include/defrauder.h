#ifndef DEFRAUDER_H
#define DEFRAUDER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DfStatus {
  DF_STATUS_OK = 0,
  DF_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  DF_STATUS_INVALID_ARGUMENT = 2,
  DF_STATUS_INVALID_PARAMS = 3,
  DF_STATUS_IO = 4,
  /**
   * Malformed input rows or files.
   */
  DF_STATUS_PARSE = 5,
  DF_STATUS_EMPTY_INPUT = 6,
  /**
   * Rating outside the declared scale, or an invalid scale.
   */
  DF_STATUS_RATING = 7,
  DF_STATUS_GROUP = 8,
  DF_STATUS_EMBEDDING = 9,
  DF_STATUS_INDEX_OUT_OF_RANGE = 10,
  /**
   * A panic was caught at the boundary. The handle involved should be freed.
   */
  DF_STATUS_INTERNAL = 99,
} DfStatus;

/**
 * Indexed review corpus.
 */
typedef struct DfDataset DfDataset;

/**
 * Candidate groups that passed the score filter.
 */
typedef struct DfGroups DfGroups;

typedef struct DfRanking DfRanking;

typedef struct DfDetectionParams {
  double tau_t;
  double tau_spam;
  double js_merge_threshold;
  size_t max_iterations;
  size_t min_group_size;
  double time_window_days;
} DfDetectionParams;

typedef struct DfIndicators {
  double rt;
  double nt;
  double pt;
  double rv;
  double rr;
  double tw;
  double collective;
  double penalty;
} DfIndicators;

typedef struct DfRankParams {
  double alpha;
  double beta;
  double gamma;
  double tau_t;
  double tau_r_percent;
  double theta;
  size_t dim;
  size_t walk_length;
  size_t walks_per_node;
  size_t window;
  double p;
  double q;
  size_t negative;
  size_t epochs;
  float learning_rate;
  /**
   * 1 is deterministic; 0 uses every core.
   */
  size_t threads;
  /**
   * Rank loose groups first instead of tight ones.
   */
  bool descending;
  uint64_t seed;
} DfRankParams;

typedef struct DfRankedGroup {
  /**
   * 1-based.
   */
  size_t rank;
  size_t group_id;
  double dispersion;
  size_t size;
  double collective;
} DfRankedGroup;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *df_last_error(void);

/**
 * Static description of a status code.
 */
const char *df_status_str(enum DfStatus status);

/**
 * Loads a CSV or JSON-lines review file. `labels_path` may be null.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum DfStatus df_dataset_load(const char *reviews_path,
                              const char *labels_path,
                              int32_t rating_min,
                              int32_t rating_max,
                              struct DfDataset **out);

/**
 * Builds a dataset from parallel arrays of length `n`. `texts` may be null
 * (all texts empty), as may individual entries.
 *
 * # Safety
 * Each non-null array must hold `n` elements; strings must be NUL-terminated.
 */
enum DfStatus df_dataset_from_arrays(size_t n,
                                     const char *const *reviewer_ids,
                                     const char *const *product_ids,
                                     const int32_t *ratings,
                                     const int64_t *days,
                                     const char *const *texts,
                                     int32_t rating_min,
                                     int32_t rating_max,
                                     struct DfDataset **out);

/**
 * # Safety
 * `ds` must be null or a live handle from this library.
 */
void df_dataset_free(struct DfDataset *ds);

/**
 * Review count after duplicate removal; 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t df_dataset_num_reviews(const struct DfDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t df_dataset_num_reviewers(const struct DfDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t df_dataset_num_products(const struct DfDataset *ds);

struct DfDetectionParams df_detection_params_default(void);

/**
 * Runs group detection. `params` may be null for defaults.
 *
 * # Safety
 * `ds` must be a live handle, `params` null or readable, `out` writable.
 */
enum DfStatus df_detect(const struct DfDataset *ds,
                        const struct DfDetectionParams *params,
                        struct DfGroups **out);

/**
 * # Safety
 * `groups` must be null or a live handle.
 */
void df_groups_free(struct DfGroups *groups);

/**
 * # Safety
 * `groups` must be null or a live handle.
 */
size_t df_groups_len(const struct DfGroups *groups);

/**
 * Whether detection stopped at `max_iterations` with edges left.
 *
 * # Safety
 * `groups` must be null or a live handle.
 */
bool df_groups_safeguard_fired(const struct DfGroups *groups);

/**
 * Group id, member count, target count and indicators of group `index`.
 * Any output pointer may be null.
 *
 * # Safety
 * `groups` must be a live handle; non-null outputs must be writable.
 */
enum DfStatus df_group_info(const struct DfGroups *groups,
                            size_t index,
                            size_t *id,
                            size_t *size,
                            size_t *n_targets,
                            struct DfIndicators *indicators);

/**
 * Id of member `member` of group `index`, sorted by dataset order. The
 * string is owned by `ds` and lives as long as it does.
 *
 * # Safety
 * `ds` and `groups` must be live handles from the same detection run;
 * `out` must be writable.
 */
enum DfStatus df_group_member(const struct DfDataset *ds,
                              const struct DfGroups *groups,
                              size_t index,
                              size_t member,
                              const char **out);

struct DfRankParams df_rank_params_default(void);

/**
 * Embeds reviewers and ranks `groups` by dispersion. `params` may be null
 * for defaults.
 *
 * # Safety
 * `ds` and `groups` must be live handles from the same dataset; `params`
 * null or readable; `out` writable.
 */
enum DfStatus df_rank(const struct DfDataset *ds,
                      const struct DfGroups *groups,
                      const struct DfRankParams *params,
                      struct DfRanking **out);

/**
 * # Safety
 * `ranking` must be null or a live handle.
 */
void df_ranking_free(struct DfRanking *ranking);

/**
 * # Safety
 * `ranking` must be null or a live handle.
 */
size_t df_ranking_len(const struct DfRanking *ranking);

/**
 * Number of positive-weight edges in the reviewer collusion graph.
 *
 * # Safety
 * `ranking` must be null or a live handle.
 */
size_t df_ranking_collusion_edges(const struct DfRanking *ranking);

/**
 * Entry at position `index` (0-based; its `rank` field is `index + 1`).
 *
 * # Safety
 * `ranking` must be a live handle and `out` writable.
 */
enum DfStatus df_ranking_get(const struct DfRanking *ranking,
                             size_t index,
                             struct DfRankedGroup *out);

/**
 * NDCG@k of relevances listed in ranked order.
 *
 * # Safety
 * `relevances` must hold `n` values (may be null when `n` is 0); `out`
 * must be writable.
 */
enum DfStatus df_ndcg_at_k(const double *relevances, size_t n, size_t k, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEFRAUDER_H */
