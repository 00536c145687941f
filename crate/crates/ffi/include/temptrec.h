#ifndef TEMPTREC_H
#define TEMPTREC_H

/* Generated from the Rust sources by the build script; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible call.
 */
typedef enum TrStatus {
  /**
   * Success; out-pointers were written.
   */
  TR_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  TR_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  TR_INVALID_UTF8 = 2,
  /**
   * JSON failed to parse or serialize.
   */
  TR_JSON = 3,
  /**
   * A configuration violated its documented invariants.
   */
  TR_CONFIG = 4,
  /**
   * Malformed input data or an out-of-range index.
   */
  TR_INPUT = 5,
  /**
   * Model training left the finite domain.
   */
  TR_DIVERGED = 6,
  /**
   * An instance exceeded the exhaustive-search size limits.
   */
  TR_TOO_LARGE = 7,
  /**
   * Too few observations for the requested operation.
   */
  TR_INSUFFICIENT_DATA = 8,
  /**
   * File-system failure.
   */
  TR_IO = 9,
  /**
   * The library caught a panic; state may be stale but the process is intact.
   */
  TR_PANIC = 10,
} TrStatus;

/**
 * A fitted behavioral model plus the configuration that produced it.
 */
typedef struct TrModel TrModel;

/**
 * A simulated world behind an opaque pointer.
 */
typedef struct TrWorld TrWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the library version as a string. Release with [`tr_string_free`].
 */
char *tr_version(void);

/**
 * Releases a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must be NULL or a pointer previously returned by this library and not
 * yet freed.
 */
void tr_string_free(char *s);

/**
 * Returns a copy of the calling thread's last error message, or NULL when
 * the last call on this thread succeeded. Release with [`tr_string_free`].
 */
char *tr_last_error_message(void);

/**
 * Generates a synthetic world from a scenario configuration JSON object
 * (users, items, outside_options, dim, scenario, item_draws, seed).
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out_world` must be
 * writable. On `TR_OK` the caller owns `*out_world`.
 */
enum TrStatus tr_world_generate(const char *config_json, struct TrWorld **out_world);

/**
 * Parses a world from its versioned JSON envelope
 * (`{"format_version": 1, "world": {...}}`) and validates it.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out_world` must be writable. On
 * `TR_OK` the caller owns `*out_world`.
 */
enum TrStatus tr_world_from_json(const char *json, struct TrWorld **out_world);

/**
 * Serializes a world into the same versioned JSON envelope the toolkit's
 * files use. Release the string with [`tr_string_free`].
 *
 * # Safety
 * `world` must be a live handle; `out_json` must be writable.
 */
enum TrStatus tr_world_to_json(const struct TrWorld *world, char **out_json);

/**
 * Reports a world's user and item counts.
 *
 * # Safety
 * `world` must be a live handle; the out-pointers must be writable.
 */
enum TrStatus tr_world_counts(const struct TrWorld *world,
                              uintptr_t *out_users,
                              uintptr_t *out_items);

/**
 * Releases a world handle. NULL is a no-op.
 *
 * # Safety
 * `world` must be NULL or a handle this library returned, not yet freed.
 */
void tr_world_free(struct TrWorld *world);

/**
 * Builds a recommendation slate for one user under perfect information
 * about this world. `policy` is a policy name (`greedy_perfect`,
 * `pure_enrichment`, `pure_temptation`, `ratings_based`, `click_based`);
 * the slate of item ids is returned as a JSON array. An empty array means
 * the policy declines to recommend this round.
 *
 * # Safety
 * `world` must be a live handle, `policy` a NUL-terminated string, and
 * `out_slate_json` writable.
 */
enum TrStatus tr_recommend(const struct TrWorld *world,
                           const char *policy,
                           uintptr_t user_index,
                           uintptr_t slate_size,
                           char **out_slate_json);

/**
 * Runs a full synthetic experiment from an experiment configuration JSON
 * object and returns the metrics report as JSON. This can take minutes at
 * paper scale; size the configuration accordingly.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out_report_json` must be
 * writable.
 */
enum TrStatus tr_experiment_run(const char *config_json, char **out_report_json);

/**
 * Fits the behavioral model to a dataset JSON envelope
 * (`{"format_version": 1, "dataset": {...}}`) under a training
 * configuration JSON object. Per-user outside expectations are inferred
 * from the dataset's outside consumptions.
 *
 * # Safety
 * The strings must be NUL-terminated; `out_model` must be writable. On
 * `TR_OK` the caller owns `*out_model`.
 */
enum TrStatus tr_fit(const char *dataset_json, const char *train_json, struct TrModel **out_model);

/**
 * Serializes a fitted model into the checkpoint JSON envelope
 * (`{"format_version": 1, "config": {...}, "model": {...}}`). Release the
 * string with [`tr_string_free`].
 *
 * # Safety
 * `model` must be a live handle; `out_json` must be writable.
 */
enum TrStatus tr_model_to_json(const struct TrModel *model, char **out_json);

/**
 * Parses a fitted model from its checkpoint JSON envelope and validates it.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out_model` must be writable. On
 * `TR_OK` the caller owns `*out_model`.
 */
enum TrStatus tr_model_from_json(const char *json, struct TrModel **out_model);

/**
 * Predicts the rating user `user_index` would leave after consuming item
 * `item_index`, under the model's own rating map.
 *
 * # Safety
 * `model` must be a live handle; `out_rating` must be writable.
 */
enum TrStatus tr_model_predicted_rating(const struct TrModel *model,
                                        uintptr_t user_index,
                                        uintptr_t item_index,
                                        double *out_rating);

/**
 * Releases a model handle. NULL is a no-op.
 *
 * # Safety
 * `model` must be NULL or a handle this library returned, not yet freed.
 */
void tr_model_free(struct TrModel *model);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TEMPTREC_H */
