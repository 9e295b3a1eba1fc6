#ifndef ALTSIM_H
#define ALTSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call.
typedef enum AltsimStatus {
  ALTSIM_STATUS_OK = 0,
  ALTSIM_STATUS_NULL_POINTER = 1,
  ALTSIM_STATUS_INVALID_UTF8 = 2,
  ALTSIM_STATUS_INVALID_PARAMETER = 3,
  ALTSIM_STATUS_NOT_FOUND = 4,
  ALTSIM_STATUS_CONFIG = 5,
  ALTSIM_STATUS_PARSE = 6,
  ALTSIM_STATUS_IO = 7,
  ALTSIM_STATUS_SERIALIZATION = 8,
  ALTSIM_STATUS_PANIC = 9,
} AltsimStatus;

// Which ranking metric [`altsim_metric`] computes.
typedef enum AltsimMetric {
  ALTSIM_METRIC_SUCCESS_AT1 = 0,
  ALTSIM_METRIC_NDCG = 1,
  ALTSIM_METRIC_MRR = 2,
} AltsimMetric;

// A target-to-alternatives map.
typedef struct AltsimAlternatives AltsimAlternatives;

// An immutable item catalog.
typedef struct AltsimCatalog AltsimCatalog;

// An alternatives-aware simulated user.
typedef struct AltsimMetaSimulator AltsimMetaSimulator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failed call on this thread, or null if the
// last call succeeded. The pointer stays valid until the next call on the
// same thread.
const char *altsim_last_error_message(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string obtained from this library, not yet freed.
void altsim_string_free(char *s);

// Generates a seeded synthetic catalog with one attribute per entry of
// `domain_sizes`.
//
// # Safety
// `domain_sizes` must point to `n_domains` values; `out` must be writable.
enum AltsimStatus altsim_catalog_generate(uint64_t seed,
                                          size_t n_items,
                                          size_t dimension,
                                          const size_t *domain_sizes,
                                          size_t n_domains,
                                          double noise,
                                          struct AltsimCatalog **out);

// Loads a catalog file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum AltsimStatus altsim_catalog_load(const char *path, struct AltsimCatalog **out);

// Writes a catalog file.
//
// # Safety
// `catalog` must be a live handle and `path` a NUL-terminated string.
enum AltsimStatus altsim_catalog_save(const struct AltsimCatalog *catalog, const char *path);

// Number of items in the catalog.
//
// # Safety
// `catalog` must be a live handle; `out` must be writable.
enum AltsimStatus altsim_catalog_len(const struct AltsimCatalog *catalog, size_t *out);

// Releases a catalog. Null is ignored.
//
// # Safety
// `catalog` must be null or a live handle, not used afterwards.
void altsim_catalog_free(struct AltsimCatalog *catalog);

// Cosine similarity of two vectors of length `dimension`.
//
// # Safety
// `a` and `b` must point to `dimension` values; `out` must be writable.
enum AltsimStatus altsim_similarity(const double *a,
                                    const double *b,
                                    size_t dimension,
                                    double *out);

// Cosine similarity of two catalog items.
//
// # Safety
// `catalog` must be a live handle, `a` and `b` NUL-terminated ids and `out`
// writable.
enum AltsimStatus altsim_item_similarity(const struct AltsimCatalog *catalog,
                                         const char *a,
                                         const char *b,
                                         double *out);

// The `k` nearest neighbours of `query` as a JSON array of
// `[id, similarity]` pairs, written to `out_json`.
//
// # Safety
// `catalog` must be a live handle, `query` a NUL-terminated id and
// `out_json` writable. Free the result with `altsim_string_free`.
enum AltsimStatus altsim_nearest_neighbors(const struct AltsimCatalog *catalog,
                                           const char *query,
                                           size_t k,
                                           bool exclude_self,
                                           char **out_json);

// Loads an alternatives file and checks its ids against `catalog`.
//
// # Safety
// `catalog` must be a live handle, `path` a NUL-terminated string and `out`
// writable.
enum AltsimStatus altsim_alternatives_load(const struct AltsimCatalog *catalog,
                                           const char *path,
                                           struct AltsimAlternatives **out);

// Releases an alternatives map. Null is ignored.
//
// # Safety
// `alternatives` must be null or a live handle, not used afterwards.
void altsim_alternatives_free(struct AltsimAlternatives *alternatives);

// The base simulator's critique text for `shown` relative to `target`.
//
// # Safety
// `catalog` must be a live handle, the ids NUL-terminated and `out_text`
// writable. Free the result with `altsim_string_free`.
enum AltsimStatus altsim_base_critique(const struct AltsimCatalog *catalog,
                                       uint32_t turn,
                                       const char *shown,
                                       const char *target,
                                       char **out_text);

// Creates a meta simulator that considers alternatives after `tolerance`
// turns. The handle keeps its own references to both inputs.
//
// # Safety
// `catalog` and `alternatives` must be live handles; `out` must be writable.
enum AltsimStatus altsim_meta_simulator_new(const struct AltsimCatalog *catalog,
                                            const struct AltsimAlternatives *alternatives,
                                            uint32_t tolerance,
                                            struct AltsimMetaSimulator **out);

// One simulated turn as JSON: the critique, the effective target and the
// switch event if the simulator moved to an alternative.
//
// # Safety
// `simulator` must be a live handle, the ids NUL-terminated and `out_json`
// writable. Free the result with `altsim_string_free`.
enum AltsimStatus altsim_meta_respond(const struct AltsimMetaSimulator *simulator,
                                      uint32_t turn,
                                      const char *shown,
                                      const char *target,
                                      char **out_json);

// Releases a meta simulator. Null is ignored.
//
// # Safety
// `simulator` must be null or a live handle, not used afterwards.
void altsim_meta_simulator_free(struct AltsimMetaSimulator *simulator);

// Scores a ranking of `n_ranked` distinct ids (best first) against a
// non-empty relevant set. `k` is ignored for success at 1.
//
// # Safety
// `ranked` and `relevant` must point to `n_ranked` and `n_relevant`
// NUL-terminated ids; `out` must be writable.
enum AltsimStatus altsim_metric(enum AltsimMetric metric,
                                const char *const *ranked,
                                size_t n_ranked,
                                const char *const *relevant,
                                size_t n_relevant,
                                size_t k,
                                double *out);

// Cohen's kappa between two equally long binary label vectors (0 or 1).
//
// # Safety
// `a` and `b` must point to `n` bytes; `out` must be writable.
enum AltsimStatus altsim_cohens_kappa(const uint8_t *a, const uint8_t *b, size_t n, double *out);

// Runs the experiment described by a TOML configuration and writes the
// full run report as JSON.
//
// # Safety
// `config_toml` must be a NUL-terminated string and `out_json` writable.
// Free the result with `altsim_string_free`.
enum AltsimStatus altsim_run_experiment(const char *config_toml, char **out_json);

// Paired base and meta runs for a TOML configuration; writes the
// comparison table as JSON.
//
// # Safety
// `config_toml` must be a NUL-terminated string and `out_json` writable.
// Free the result with `altsim_string_free`.
enum AltsimStatus altsim_compare(const char *config_toml, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALTSIM_H */
