/* C interface to the linematch line-segment matcher. */

#ifndef LINEMATCH_H
#define LINEMATCH_H

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum LmStatus {
  LM_STATUS_OK = 0,
  LM_STATUS_NULL_POINTER = 1,
  LM_STATUS_INVALID_SEGMENT = 2,
  LM_STATUS_INVALID_CONFIG = 3,
  LM_STATUS_OUT_OF_RANGE = 4,
} LmStatus;

/**
 * Opaque match result.
 */
typedef struct LmMatchSet LmMatchSet;

/**
 * Opaque growable set of 2D segments.
 */
typedef struct LmSegmentSet LmSegmentSet;

/**
 * Matching configuration; obtain defaults from `lm_config_default`.
 */
typedef struct LmMatchConfig {
  /**
   * 0 = stereo, 1 = frame-to-frame.
   */
  int32_t mode;
  double lambda;
  double uniqueness_factor;
  double sigma_multiplier;
  double min_overlap;
} LmMatchConfig;

/**
 * One resolved correspondence.
 */
typedef struct LmMatch {
  uint64_t ref_id;
  uint64_t cand_id;
  double residual;
  double weight;
} LmMatch;

/**
 * Per-stage rejection counters.
 */
typedef struct LmRejectionStats {
  uint64_t no_candidate;
  uint64_t ratio_test;
  uint64_t conflict;
  uint64_t epipolar_filter;
} LmRejectionStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a NUL-terminated string; the pointer is static.
 */
const char *lm_version(void);

/**
 * Default configuration for the given mode (0 = stereo, 1 = frame-to-frame).
 */
struct LmMatchConfig lm_config_default(int32_t mode);

/**
 * Allocate an empty segment set. Free with `lm_segment_set_free`.
 */
struct LmSegmentSet *lm_segment_set_new(void);

/**
 * # Safety
 * `set` must be a pointer from `lm_segment_set_new` or null.
 */
void lm_segment_set_free(struct LmSegmentSet *set);

/**
 * Append one oriented segment. Zero-length or non-finite segments are
 * rejected with `InvalidSegment`.
 *
 * # Safety
 * `set` must be a valid pointer from `lm_segment_set_new`.
 */
enum LmStatus lm_segment_set_push(struct LmSegmentSet *set,
                                  uint64_t id,
                                  double x1,
                                  double y1,
                                  double x2,
                                  double y2);

/**
 * # Safety
 * `set` must be a valid pointer from `lm_segment_set_new`.
 */
uint64_t lm_segment_set_len(const struct LmSegmentSet *set);

/**
 * Match `set1` against `set2`; on success `*out` owns the result and must
 * be released with `lm_match_set_free`.
 *
 * # Safety
 * All pointers must be valid; `out` must point to writable storage.
 */
enum LmStatus lm_match(const struct LmSegmentSet *set1,
                       const struct LmSegmentSet *set2,
                       const struct LmMatchConfig *cfg,
                       struct LmMatchSet **out);

/**
 * # Safety
 * `set` must be a pointer from `lm_match` or null.
 */
void lm_match_set_free(struct LmMatchSet *set);

/**
 * # Safety
 * `set` must be a valid pointer from `lm_match`.
 */
uint64_t lm_match_set_len(const struct LmMatchSet *set);

/**
 * Copy match `index` into `*out`.
 *
 * # Safety
 * `set` and `out` must be valid pointers.
 */
enum LmStatus lm_match_set_get(const struct LmMatchSet *set, uint64_t index, struct LmMatch *out);

/**
 * Copy the rejection counters into `*out`.
 *
 * # Safety
 * `set` and `out` must be valid pointers.
 */
enum LmStatus lm_match_set_stats(const struct LmMatchSet *set, struct LmRejectionStats *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LINEMATCH_H */
