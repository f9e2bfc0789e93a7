#ifndef OTDIFF_H
#define OTDIFF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum {
  OTDIFF_STATUS_OK = 0,
  OTDIFF_STATUS_NULL_POINTER = 1,
  OTDIFF_STATUS_FORMAT = 2,
  OTDIFF_STATUS_VALUE = 3,
  OTDIFF_STATUS_SHAPE = 4,
  OTDIFF_STATUS_CAPABILITY = 5,
  OTDIFF_STATUS_NUMERICAL = 6,
  OTDIFF_STATUS_SIZE = 7,
  OTDIFF_STATUS_IO = 8,
  OTDIFF_STATUS_PANIC = 9,
} OtdiffStatus;

/**
 * Sinkhorn-normalized diffusion operator `Q = Lambda S Lambda`.
 */
typedef struct OtdiffDiffusion OtdiffDiffusion;

/**
 * Smoothing operator `S = K M`.
 */
typedef struct OtdiffOperator OtdiffOperator;

/**
 * Summary of a Sinkhorn run.
 */
typedef struct {
  /**
   * 1 when the tolerance was reached.
   */
  int32_t converged;
  size_t iterations;
  double final_error;
} OtdiffSinkhornInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *otdiff_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *otdiff_version(void);

/**
 * Gaussian point-cloud operator. `positions` is `n x dim`; `masses` may be
 * NULL for uniform masses `1/n`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
OtdiffStatus otdiff_operator_gaussian(size_t dim,
                                      size_t n,
                                      const double *positions,
                                      const double *masses,
                                      double sigma,
                                      OtdiffOperator **out);

/**
 * Exponential point-cloud operator `exp(-|x - y| / sigma)`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
OtdiffStatus otdiff_operator_exponential(size_t dim,
                                         size_t n,
                                         const double *positions,
                                         const double *masses,
                                         double sigma,
                                         OtdiffOperator **out);

/**
 * Graph operator from `n_edges` undirected edges `(edge_i[e], edge_j[e])`
 * with weights `weights[e]`, regularized by `epsilon`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
OtdiffStatus otdiff_operator_graph(size_t n_vertices,
                                   size_t n_edges,
                                   const size_t *edge_i,
                                   const size_t *edge_j,
                                   const double *weights,
                                   const double *masses,
                                   double epsilon,
                                   OtdiffOperator **out);

/**
 * Gaussian-mixture operator. `means` is `n x dim`, `covariances` is
 * `n x dim x dim` (row-major per component), `weights` are the masses.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
OtdiffStatus otdiff_operator_gmm(size_t dim,
                                 size_t n,
                                 const double *weights,
                                 const double *means,
                                 const double *covariances,
                                 double sigma,
                                 OtdiffOperator **out);

/**
 * Sparse voxel operator. `indices` is `n x 3` cell indices inside `dims`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths (`dims`, `origin`: 3).
 */
OtdiffStatus otdiff_operator_voxel(const size_t *dims,
                                   const double *origin,
                                   double spacing,
                                   size_t n,
                                   const size_t *indices,
                                   const double *masses,
                                   double sigma,
                                   OtdiffOperator **out);

/**
 * Releases an operator. NULL is ignored.
 *
 * # Safety
 * `op` must come from an `otdiff_operator_*` constructor and not be used
 * afterwards.
 */
void otdiff_operator_free(OtdiffOperator *op);

/**
 * Number of degrees of freedom.
 *
 * # Safety
 * `op` must be a live handle, `out` writable.
 */
OtdiffStatus otdiff_operator_len(const OtdiffOperator *op, size_t *out);

/**
 * `out = S f` for an `n x channels` signal.
 *
 * # Safety
 * `f` and `out` must hold `n * channels` doubles.
 */
OtdiffStatus otdiff_operator_matvec(const OtdiffOperator *op,
                                    const double *f,
                                    size_t channels,
                                    double *out);

/**
 * Runs the symmetric Sinkhorn loop on a copy of `op`. `log_domain` selects
 * the log-sum-exp evaluation (point and mixture operators only). A
 * diffusion handle is returned even when the tolerance is not reached;
 * check `info`.
 *
 * # Safety
 * `op` must be a live handle; `out` writable; `info` may be NULL.
 */
OtdiffStatus otdiff_sinkhorn(const OtdiffOperator *op,
                             double tol,
                             size_t max_iter,
                             int32_t log_domain,
                             OtdiffDiffusion **out,
                             OtdiffSinkhornInfo *info);

/**
 * Releases a diffusion handle. NULL is ignored.
 *
 * # Safety
 * `diff` must come from [`otdiff_sinkhorn`] and not be used afterwards.
 */
void otdiff_diffusion_free(OtdiffDiffusion *diff);

/**
 * Copies the `n` log-scales `log lambda_i`.
 *
 * # Safety
 * `out` must hold `n` doubles.
 */
OtdiffStatus otdiff_diffusion_log_scales(const OtdiffDiffusion *diff, double *out);

/**
 * `out = Q^steps f` for an `n x channels` signal.
 *
 * # Safety
 * `f` and `out` must hold `n * channels` doubles.
 */
OtdiffStatus otdiff_diffusion_apply(const OtdiffDiffusion *diff,
                                    const double *f,
                                    size_t channels,
                                    size_t steps,
                                    double *out);

/**
 * Leading `k` eigenpairs of `Q`: `values` (k, descending), `vectors`
 * (`n x k` row-major, M-orthonormal columns), `residuals` (k, may be NULL).
 *
 * # Safety
 * Output buffers must have the stated sizes.
 */
OtdiffStatus otdiff_top_eigenpairs(const OtdiffDiffusion *diff,
                                   size_t k,
                                   double solver_tol,
                                   size_t max_iters,
                                   uint64_t seed,
                                   double *values,
                                   double *vectors,
                                   double *residuals);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTDIFF_H */
