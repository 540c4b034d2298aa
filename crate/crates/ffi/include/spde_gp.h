#ifndef SPDE_GP_H
#define SPDE_GP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>

// Result of every fallible call.
typedef enum SpdeStatus {
  SPDE_STATUS_OK = 0,
  SPDE_STATUS_NULL_POINTER = 1,
  SPDE_STATUS_INVALID_ARGUMENT = 2,
  SPDE_STATUS_DATA_ERROR = 3,
  SPDE_STATUS_NUMERIC_ERROR = 4,
  SPDE_STATUS_PANIC = 5,
} SpdeStatus;

// Gaussian-process model conditioned on training data.
typedef struct SpdeGp SpdeGp;

// Graph with vertices `0..n`.
typedef struct SpdeGraph SpdeGraph;

// Kernel specification with its hyperparameters.
typedef struct SpdeKernel SpdeKernel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the calling thread's most recent failure (empty if none).
// The pointer stays valid until the next failing call on this thread.
const char *spde_last_error(void);

// Library version as a static NUL-terminated string.
const char *spde_version(void);

// Builds a graph on vertices `0..n_vertices` from `n_edges` edges
// `src[i] → dst[i]`. `weights` may be null for unit weights.
//
// # Safety
// `src`, `dst` and a non-null `weights` must point to `n_edges` elements;
// `out` must be writable.
enum SpdeStatus spde_graph_new(size_t n_vertices,
                               const size_t *src,
                               const size_t *dst,
                               const double *weights,
                               size_t n_edges,
                               bool directed,
                               struct SpdeGraph **out);

// Undirected path graph `0 – 1 – … – n−1` with unit weights.
//
// # Safety
// `out` must be writable.
enum SpdeStatus spde_graph_path(size_t n_vertices, struct SpdeGraph **out);

// Number of vertices, or 0 for a null handle.
//
// # Safety
// `graph` must be null or a live handle.
size_t spde_graph_n_vertices(const struct SpdeGraph *graph);

// # Safety
// `graph` must be null or a handle not freed before.
void spde_graph_free(struct SpdeGraph *graph);

// Default-parameterized kernel by name: `laplacian`, `matern`,
// `sep-matern-rbf`, `sep-laplacian-rbf`, `shek` or `swek`.
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum SpdeStatus spde_kernel_new(const char *name, struct SpdeKernel **out);

// Kernel from its JSON description, e.g.
// `{"kind":"shek","c":1,"sigma":1,"nu":2,"kappa":10}`.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum SpdeStatus spde_kernel_from_json(const char *json, struct SpdeKernel **out);

// Sets a named hyperparameter (`c`, `sigma`, `nu`, `kappa`, `variance`,
// `time_lengthscale`, `frequency`).
//
// # Safety
// `kernel` must be a live handle and `name` a NUL-terminated string.
enum SpdeStatus spde_kernel_set(struct SpdeKernel *kernel, const char *name, double value);

// # Safety
// `kernel` must be a live handle, `name` a NUL-terminated string and
// `out` writable.
enum SpdeStatus spde_kernel_get(const struct SpdeKernel *kernel, const char *name, double *out);

// # Safety
// `kernel` must be null or a handle not freed before.
void spde_kernel_free(struct SpdeKernel *kernel);

// Writes the `n × n` covariance between the points `(vertices[i],
// times[i])` to `out` (row-major). Times are used as given, so process
// kernels need `times ≥ 0`.
//
// # Safety
// `vertices` and `times` must hold `n` elements and `out` `n·n`.
enum SpdeStatus spde_kernel_gram(const struct SpdeKernel *kernel,
                                 const struct SpdeGraph *graph,
                                 const size_t *vertices,
                                 const double *times,
                                 size_t n,
                                 double *out);

// Conditions a GP with the given kernel and observation-noise variance on
// `n` observations `y[i]` at `(vertices[i], times[i])`. The earliest
// training time is mapped to process time 1 and each vertex's training
// mean is used as its prior mean.
//
// # Safety
// Arrays must hold `n` elements; `out` must be writable.
enum SpdeStatus spde_gp_train(const struct SpdeKernel *kernel,
                              const struct SpdeGraph *graph,
                              double noise_variance,
                              const size_t *vertices,
                              const double *times,
                              const double *y,
                              size_t n,
                              struct SpdeGp **out);

// # Safety
// `gp` must be a live handle and `out` writable.
enum SpdeStatus spde_gp_log_marginal_likelihood(const struct SpdeGp *gp, double *out);

// Posterior mean (and, if `variance` is non-null, latent variance) at
// `m` query points.
//
// # Safety
// `vertices`, `times`, `mean` and a non-null `variance` must hold `m`
// elements.
enum SpdeStatus spde_gp_predict(const struct SpdeGp *gp,
                                const size_t *vertices,
                                const double *times,
                                size_t m,
                                double *mean,
                                double *variance);

// # Safety
// `gp` must be null or a handle not freed before.
void spde_gp_free(struct SpdeGp *gp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPDE_GP_H */
