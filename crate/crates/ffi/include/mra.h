#ifndef MRA_H
#define MRA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MraStatus {
  MRA_STATUS_OK = 0,
  MRA_STATUS_NULL_POINTER = 1,
  /**
   * Not UTF-8, not valid JSON, or an unknown model.
   */
  MRA_STATUS_INVALID_ARGUMENT = 2,
  MRA_STATUS_STRUCTURE = 3,
  MRA_STATUS_VALIDATION = 4,
  MRA_STATUS_INFEASIBLE = 5,
  MRA_STATUS_REFUSED = 6,
  MRA_STATUS_BUFFER_TOO_SMALL = 7,
  MRA_STATUS_PANIC = 8,
} MraStatus;

typedef enum MraVerdict {
  MRA_VERDICT_PASS = 0,
  MRA_VERDICT_FAIL = 1,
  MRA_VERDICT_INCONCLUSIVE = 2,
} MraVerdict;

/**
 * An ordered orthonormal basis of the flat coefficient space.
 */
typedef struct MraBasis MraBasis;

/**
 * Per-block Gram matrices.
 */
typedef struct MraGrams MraGrams;

/**
 * A group model together with its representation layout.
 */
typedef struct MraModel MraModel;

/**
 * A signal as per-block coefficient matrices.
 */
typedef struct MraSignal MraSignal;

typedef struct MraBound {
  /**
   * Dimension of the signal space.
   */
  size_t n;
  /**
   * `sum min(N_l R_l, N_l^2)` over blocks.
   */
  size_t m;
  /**
   * `n - m`; zero or negative when no sparsity level is identifiable.
   */
  int64_t k_max;
  double ratio;
} MraBound;

typedef struct MraRecoveryInfo {
  bool converged;
  double gram_residual;
  double sparsity_violation;
  size_t restarts_run;
} MraRecoveryInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mra_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *mra_last_error(void);

/**
 * Builds a model from JSON such as `{"model":"cryo_em","L":4,"R":9}`.
 *
 * # Safety
 * `json` must be NUL-terminated; `out_model` must be writable.
 */
enum MraStatus mra_model_from_json(const char *json, struct MraModel **out_model);

/**
 * # Safety
 * `model` must come from [`mra_model_from_json`] or be NULL.
 */
void mra_model_free(struct MraModel *model);

/**
 * Complex dimension of the model's signal space.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MraStatus mra_model_dim(const struct MraModel *model, size_t *out_dim);

/**
 * # Safety
 * Pointers must be valid.
 */
enum MraStatus mra_model_bound(const struct MraModel *model, struct MraBound *out_bound);

/**
 * Random orthonormal basis derived from `seed`, the same one the `mra` CLI
 * draws for that seed.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MraStatus mra_basis_random(const struct MraModel *model,
                                uint64_t seed,
                                struct MraBasis **out_basis);

/**
 * # Safety
 * `basis` must come from this library or be NULL.
 */
void mra_basis_free(struct MraBasis *basis);

/**
 * Random signal. With `k > 0` it is `k`-sparse in `basis`, which must then
 * be non-NULL; with `k == 0` it is dense and `basis` is ignored.
 *
 * # Safety
 * Pointers must be valid; `basis` may be NULL when `k == 0`.
 */
enum MraStatus mra_signal_random(const struct MraModel *model,
                                 const struct MraBasis *basis,
                                 size_t k,
                                 uint64_t seed,
                                 struct MraSignal **out_signal);

/**
 * Signal from `len` interleaved complex coefficients in flat order.
 *
 * # Safety
 * `data` must hold `2 * len` doubles.
 */
enum MraStatus mra_signal_from_flat(const struct MraModel *model,
                                    const double *data,
                                    size_t len,
                                    struct MraSignal **out_signal);

/**
 * Writes the flat coefficients as interleaved doubles. `len` is the
 * capacity in complex entries and must be at least the model dimension.
 *
 * # Safety
 * `data` must hold `2 * len` doubles.
 */
enum MraStatus mra_signal_to_flat(const struct MraSignal *signal, double *data, size_t len);

/**
 * # Safety
 * `signal` must come from this library or be NULL.
 */
void mra_signal_free(struct MraSignal *signal);

/**
 * Population second moment of a signal.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MraStatus mra_grams_from_signal(const struct MraSignal *signal, struct MraGrams **out_grams);

/**
 * # Safety
 * `grams` must come from this library or be NULL.
 */
void mra_grams_free(struct MraGrams *grams);

/**
 * Frobenius distance between two Gram lists of the same layout.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MraStatus mra_grams_distance(const struct MraGrams *a,
                                  const struct MraGrams *b,
                                  double *out_distance);

/**
 * Checks the identifiability conditions at sparsity `k` on `trials` random
 * supports. `out_min_gap` may be NULL.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MraStatus mra_certify(const struct MraModel *model,
                           const struct MraBasis *basis,
                           size_t k,
                           size_t trials,
                           uint64_t seed,
                           enum MraVerdict *out_verdict,
                           double *out_min_gap);

/**
 * Searches for a `k`-sparse signal in `basis` with the given Grams.
 * `restarts == 0` keeps the default budget. `out_info` may be NULL. A search
 * that does not converge still returns its best estimate with `Ok`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MraStatus mra_recover(const struct MraGrams *grams,
                           const struct MraBasis *basis,
                           size_t k,
                           size_t restarts,
                           uint64_t seed,
                           struct MraSignal **out_signal,
                           struct MraRecoveryInfo *out_info);

/**
 * JSON form of a signal; release with [`mra_string_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum MraStatus mra_signal_to_json(const struct MraSignal *signal, char **out_json);

/**
 * JSON form of a Gram list; release with [`mra_string_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum MraStatus mra_grams_to_json(const struct MraGrams *grams, char **out_json);

/**
 * # Safety
 * `s` must come from a `*_to_json` call or be NULL.
 */
void mra_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MRA_H */
