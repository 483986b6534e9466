#ifndef REPSIM_H
#define REPSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum RsStatus {
  RS_STATUS_OK = 0,
  /**
   * A required pointer argument was null or a string was not UTF-8.
   */
  RS_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Bad parameter value (bandwidth, block size, ...).
   */
  RS_STATUS_CONFIG = 2,
  /**
   * Malformed input data: shapes, non-finite values, unreadable files.
   */
  RS_STATUS_DATA = 3,
  /**
   * Input is valid but the statistic is undefined, e.g. constant vectors.
   */
  RS_STATUS_NUMERICAL = 4,
  /**
   * Internal panic; the library state is unaffected.
   */
  RS_STATUS_PANIC = 5,
} RsStatus;

/**
 * Opaque embedding matrix (`n` rows, `p` columns).
 */
typedef struct RsEmbedding RsEmbedding;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies a row-major `n x p` matrix into a new handle. With `normalize`,
 * rows are scaled to unit length (zero rows are rejected).
 *
 * # Safety
 * `data` must point to `n * p` readable doubles; `out` must be writable.
 */
enum RsStatus rs_embedding_from_rows(const double *data,
                                     size_t n,
                                     size_t p,
                                     bool normalize,
                                     struct RsEmbedding **out);

/**
 * Loads a 2-D `<f4`/`<f8` NPY file into a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RsStatus rs_embedding_from_npy(const char *path, bool normalize, struct RsEmbedding **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `h` must come from an `rs_embedding_*` constructor and not be used again.
 */
void rs_embedding_free(struct RsEmbedding *h);

/**
 * # Safety
 * `h` must be a live handle; `n` and `p` must be writable.
 */
enum RsStatus rs_embedding_shape(const struct RsEmbedding *h, size_t *n, size_t *p);

/**
 * Linear CKA in `[0, 1]`.
 *
 * # Safety
 * `a`, `b` must be live handles; `out` must be writable.
 */
enum RsStatus rs_cka_linear(const struct RsEmbedding *a, const struct RsEmbedding *b, double *out);

/**
 * RBF CKA with bandwidth `sigma_frac` times each matrix's median pairwise
 * distance. `block` rows of the kernel are held at a time (0 = default).
 *
 * # Safety
 * `a`, `b` must be live handles; `out` must be writable.
 */
enum RsStatus rs_cka_rbf(const struct RsEmbedding *a,
                         const struct RsEmbedding *b,
                         double sigma_frac,
                         size_t block,
                         double *out);

/**
 * Spearman correlation of the two 1 - Pearson dissimilarity matrices.
 *
 * # Safety
 * `a`, `b` must be live handles; `out` must be writable.
 */
enum RsStatus rs_rsa_spearman(const struct RsEmbedding *a,
                              const struct RsEmbedding *b,
                              double *out);

/**
 * # Safety
 * `u` and `v` must point to `len` readable doubles; `out` must be writable.
 */
enum RsStatus rs_pearson(const double *u, const double *v, size_t len, double *out);

/**
 * Pearson correlation of average ranks.
 *
 * # Safety
 * `u` and `v` must point to `len` readable doubles; `out` must be writable.
 */
enum RsStatus rs_spearman(const double *u, const double *v, size_t len, double *out);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `cap > 0`). Returns the full message length
 * in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null with `cap == 0`.
 */
size_t rs_last_error(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rs_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REPSIM_H */
