#ifndef SOTL_H
#define SOTL_H

/* Generated by cbindgen; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum SotlStatus {
  SOTL_STATUS_OK = 0,
  SOTL_STATUS_NULL_POINTER = 1,
  SOTL_STATUS_INVALID_ARGUMENT = 2,
  SOTL_STATUS_DIMENSION_MISMATCH = 3,
  SOTL_STATUS_SOLVER_FAILURE = 4,
  SOTL_STATUS_PANIC = 5,
} SotlStatus;

typedef struct SotlFit SotlFit;

/**
 * Groups collected for one fit; the target defaults to the first group.
 */
typedef struct SotlProblem SotlProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or null.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *sotl_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sotl_version(void);

/**
 * Creates an empty problem. Never returns null.
 */
struct SotlProblem *sotl_problem_new(void);

/**
 * # Safety
 * `problem` must be null or a handle from [`sotl_problem_new`] not yet freed.
 */
void sotl_problem_free(struct SotlProblem *problem);

/**
 * Appends a group with an `n × p` row-major design and `n` responses.
 *
 * # Safety
 * `x` must point to `n * p` readable doubles and `y` to `n`.
 */
enum SotlStatus sotl_problem_add_group(struct SotlProblem *problem,
                                       size_t n,
                                       size_t p,
                                       const double *x,
                                       const double *y);

/**
 * Marks group `index` (in insertion order) as the target.
 *
 * # Safety
 * `problem` must be a live handle.
 */
enum SotlStatus sotl_problem_set_target(struct SotlProblem *problem, size_t index);

/**
 * Number of groups added so far.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
enum SotlStatus sotl_problem_group_count(const struct SotlProblem *problem, size_t *out);

/**
 * Fits the L0 estimator, sweeping support sizes `1..=gamma_max`
 * (`gamma_max = 0` applies the default rule).
 *
 * # Safety
 * `problem` must be a live handle and `out` writable; on success `*out`
 * receives a fit handle to release with [`sotl_fit_free`].
 */
enum SotlStatus sotl_fit_sotl(const struct SotlProblem *problem,
                              size_t gamma_max,
                              struct SotlFit **out);

/**
 * Fits the cross-validated lasso baseline; `seed` fixes the fold assignment.
 *
 * # Safety
 * Same contract as [`sotl_fit_sotl`].
 */
enum SotlStatus sotl_fit_sjets(const struct SotlProblem *problem,
                               uint64_t seed,
                               struct SotlFit **out);

/**
 * # Safety
 * `fit` must be null or a live fit handle.
 */
void sotl_fit_free(struct SotlFit *fit);

/**
 * Length of the target coefficient vector.
 *
 * # Safety
 * `fit` must be a live handle and `out` writable.
 */
enum SotlStatus sotl_fit_beta_len(const struct SotlFit *fit, size_t *out);

/**
 * Copies the target coefficients into `buf`, which holds `len` doubles.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum SotlStatus sotl_fit_copy_beta(const struct SotlFit *fit, double *buf, size_t len);

/**
 * Selected support size (for lasso fits, the number of nonzeros).
 *
 * # Safety
 * `fit` must be a live handle and `out` writable.
 */
enum SotlStatus sotl_fit_gamma_opt(const struct SotlFit *fit, size_t *out);

/**
 * Serializes the full fit result as JSON. The string must be released with
 * [`sotl_string_free`].
 *
 * # Safety
 * `fit` must be a live handle and `out` writable.
 */
enum SotlStatus sotl_fit_to_json(const struct SotlFit *fit, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void sotl_string_free(char *s);

/**
 * HBIC of a fit with `gamma` nonzeros and residual sum of squares `rss` on a
 * stacked system with `n` rows and `n_cols` columns.
 *
 * # Safety
 * `out` must be writable.
 */
enum SotlStatus sotl_hbic(size_t n, size_t n_cols, size_t gamma, double rss, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOTL_H */
