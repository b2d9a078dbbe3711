#ifndef SPECTRAL_LCA_H
#define SPECTRAL_LCA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SlcaStatus {
  SLCA_STATUS_OK = 0,
  SLCA_STATUS_NULL_POINTER = 1,
  SLCA_STATUS_INVALID_ARGUMENT = 2,
  SLCA_STATUS_IO = 3,
  SLCA_STATUS_FORMAT = 4,
  SLCA_STATUS_INIT_FAILURE = 5,
  SLCA_STATUS_SEARCH_FAILURE = 6,
  SLCA_STATUS_NUMERICAL = 7,
  SLCA_STATUS_CAPABILITY = 8,
  SLCA_STATUS_INTERNAL = 9,
} SlcaStatus;

/**
 * Cluster-label queries under an accepted partition.
 */
typedef struct SlcaClusterer SlcaClusterer;

/**
 * A d-regular graph with optional ground-truth clusters.
 */
typedef struct SlcaGraph SlcaGraph;

/**
 * A dot-product oracle bound to its graph.
 */
typedef struct SlcaOracle SlcaOracle;

/**
 * Oracle sizes. All fields must be set.
 */
typedef struct SlcaOracleParams {
  double delta;
  double xi;
  size_t t;
  uint32_t r_init;
  uint32_t r_query;
  size_t s;
  size_t m;
  size_t k;
} SlcaOracleParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread. Valid until the next failing call.
 */
const char *slca_last_error(void);

/**
 * Loads a graph file.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum SlcaStatus slca_graph_load(const char *path, struct SlcaGraph **out);

/**
 * Generates a clusterable instance with `k` clusters of the given sizes.
 *
 * # Safety
 * `sizes` must point to `k` values, `seed_hex` must be a valid C string and `out` a
 * valid pointer.
 */
enum SlcaStatus slca_graph_generate(size_t k,
                                    const size_t *sizes,
                                    size_t d,
                                    double p_cross,
                                    const char *seed_hex,
                                    struct SlcaGraph **out);

/**
 * Number of vertices, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live graph handle.
 */
size_t slca_graph_vertex_count(const struct SlcaGraph *g);

/**
 * Ground-truth cluster (0-based) of vertex `x`, or -1 if unknown.
 *
 * # Safety
 * `g` must be null or a live graph handle.
 */
int64_t slca_graph_cluster_of(const struct SlcaGraph *g, size_t x);

/**
 * # Safety
 * `g` must be null or a handle from this library that has not been freed.
 */
void slca_graph_free(struct SlcaGraph *g);

/**
 * Builds the oracle. The graph handle stays owned by the caller.
 *
 * # Safety
 * All pointers must be valid; `seed_hex` must be a C string.
 */
enum SlcaStatus slca_oracle_init(const struct SlcaGraph *g,
                                 const struct SlcaOracleParams *params,
                                 const char *seed_hex,
                                 struct SlcaOracle **out);

/**
 * Loads a saved oracle and checks it belongs to `g`.
 *
 * # Safety
 * All pointers must be valid; `path` must be a C string.
 */
enum SlcaStatus slca_oracle_load(const struct SlcaGraph *g,
                                 const char *path,
                                 struct SlcaOracle **out);

/**
 * # Safety
 * `o` must be a live oracle handle and `path` a C string.
 */
enum SlcaStatus slca_oracle_save(const struct SlcaOracle *o, const char *path);

/**
 * Approximate dot product of the spectral embeddings of `x` and `y`.
 *
 * # Safety
 * `o` must be a live oracle handle and `out` a valid pointer.
 */
enum SlcaStatus slca_oracle_dot(const struct SlcaOracle *o, size_t x, size_t y, double *out);

/**
 * Graph probes made through this oracle so far, including initialization.
 *
 * # Safety
 * `o` must be null or a live oracle handle.
 */
uint64_t slca_oracle_probe_count(const struct SlcaOracle *o);

/**
 * # Safety
 * `o` must be null or a handle from this library that has not been freed.
 */
void slca_oracle_free(struct SlcaOracle *o);

/**
 * Opens a partition file written by `find-centers`.
 *
 * # Safety
 * `o` must be a live oracle handle, `path` a C string and `out` a valid pointer.
 */
enum SlcaStatus slca_clusterer_open(const struct SlcaOracle *o,
                                    const char *path,
                                    struct SlcaClusterer **out);

/**
 * Exhaustive center search with measured conductance proxies.
 *
 * # Safety
 * `o` must be a live oracle handle, `seed_hex` a C string and `out` a valid pointer.
 */
enum SlcaStatus slca_clusterer_find(const struct SlcaOracle *o,
                                    double eps_hat,
                                    double phi_hat,
                                    double eta,
                                    size_t sample_size,
                                    const char *seed_hex,
                                    struct SlcaClusterer **out);

/**
 * Cluster label in 1..=k of vertex `x`.
 *
 * # Safety
 * `c` must be a live clusterer handle and `out` a valid pointer.
 */
enum SlcaStatus slca_clusterer_assign(const struct SlcaClusterer *c, size_t x, uint32_t *out);

/**
 * # Safety
 * `c` must be null or a handle from this library that has not been freed.
 */
void slca_clusterer_free(struct SlcaClusterer *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECTRAL_LCA_H */
