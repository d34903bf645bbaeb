#ifndef FACTMIX_H
#define FACTMIX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FmStatus {
  FM_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8, out-of-range code or malformed JSON.
   */
  FM_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Input data violates the schema or a metric precondition.
   */
  FM_STATUS_DATA = 2,
  /**
   * Model backend or checkpoint problem.
   */
  FM_STATUS_BACKEND = 3,
  /**
   * A panic was caught at the boundary.
   */
  FM_STATUS_INTERNAL = 4,
} FmStatus;

typedef enum FmAveraging {
  FM_AVERAGING_MACRO = 0,
  FM_AVERAGING_MICRO = 1,
  FM_AVERAGING_WEIGHTED = 2,
} FmAveraging;

/**
 * Opaque verifier handle.
 */
typedef struct FmVerifier FmVerifier;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *fm_last_error(void);

/**
 * Library version as a static string.
 */
const char *fm_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void fm_string_free(char *s);

/**
 * Loads a checkpoint directory written by `factmix train`.
 *
 * # Safety
 * `checkpoint_dir` must be a NUL-terminated string; `out` must be writable.
 */
enum FmStatus fm_verifier_open(const char *checkpoint_dir, struct FmVerifier **out);

/**
 * Predicts one unified-schema example given as a JSON line. Writes
 * `{"label": code, "probs": [...]}` to `out_json`.
 *
 * # Safety
 * `verifier` must come from [`fm_verifier_open`]; `example_json` must be a
 * NUL-terminated string; `out_json` must be writable.
 */
enum FmStatus fm_verifier_predict_json(const struct FmVerifier *verifier,
                                       const char *example_json,
                                       char **out_json);

/**
 * # Safety
 * `verifier` must be null or a handle from [`fm_verifier_open`], freed once.
 */
void fm_verifier_free(struct FmVerifier *verifier);

/**
 * Maps a prediction into a target label space given as a bit mask
 * (bit `c` set means code `c` is in the space). `probs` may be null when
 * `n_probs` is zero.
 *
 * # Safety
 * `probs` must point to `n_probs` doubles; `out_label` must be writable.
 */
enum FmStatus fm_map_prediction(uint8_t label,
                                const double *probs,
                                size_t n_probs,
                                uint8_t space_mask,
                                uint8_t *out_label);

/**
 * F1 in percent over label codes.
 *
 * # Safety
 * `preds` and `golds` must each point to `n` bytes; `out` must be writable.
 */
enum FmStatus fm_f1(const uint8_t *preds,
                    const uint8_t *golds,
                    size_t n,
                    enum FmAveraging averaging,
                    double *out);

/**
 * Fleiss' kappa of a row-major `items` x `categories` count matrix.
 *
 * # Safety
 * `counts` must point to `items * categories` values; `out` must be writable.
 */
enum FmStatus fm_fleiss_kappa(const uint32_t *counts, size_t items, size_t categories, double *out);

/**
 * Builds the explanation prompt for a claim, evidence and label code.
 *
 * # Safety
 * String arguments must be NUL-terminated; output pointers must be writable.
 */
enum FmStatus fm_build_prompt(const char *claim,
                              const char *evidence,
                              uint8_t label,
                              char **out_system,
                              char **out_user);

/**
 * Normalizes one raw record (a JSON object) of `dataset` into a unified
 * JSON line.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out_json` must be writable.
 */
enum FmStatus fm_normalize_json(const char *dataset,
                                const char *split,
                                const char *raw_json,
                                char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACTMIX_H */
