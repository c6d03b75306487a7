/*
 * C interface to the interaction-locality toolkit.
 *
 * Every fallible call returns an LcStatus. On failure a message is
 * available from lc_last_error_message() on the same thread.
 * Handles returned through out-pointers are owned by the caller and
 * released with the matching *_free function.
 */

#ifndef LOCALITY_H
#define LOCALITY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum LcStatus {
  LC_STATUS_OK = 0,
  LC_STATUS_NULL_POINTER = 1,
  LC_STATUS_INVALID_ARGUMENT = 2,
  LC_STATUS_INVALID_INSTANCE = 3,
  LC_STATUS_SHAPE = 4,
  LC_STATUS_DEGENERATE = 5,
  LC_STATUS_INFINITE_RATIO = 6,
  LC_STATUS_INSUFFICIENT_DATA = 7,
  LC_STATUS_NO_FOREGROUND = 8,
  LC_STATUS_IO = 9,
  /**
   * Malformed JSON, CSV, manifest or payload.
   */
  LC_STATUS_FORMAT = 10,
  LC_STATUS_CALIBRATION = 11,
  LC_STATUS_DIVERGENCE = 12,
  /**
   * The caller's output buffer is too small.
   */
  LC_STATUS_BUFFER_TOO_SMALL = 13,
  LC_STATUS_PANIC = 14,
} LcStatus;

typedef enum LcLevel {
  LC_LEVEL_L = 0,
  LC_LEVEL_H = 1,
} LcLevel;

/**
 * Site sets, neighborhoods and segments of one task instance.
 */
typedef struct LcGeometry LcGeometry;

/**
 * Toy recursive model.
 */
typedef struct LcModel LcModel;

/**
 * Activation trace read from disk.
 */
typedef struct LcTrace LcTrace;

/**
 * Bootstrap confidence interval.
 */
typedef struct LcInterval {
  double mean;
  double lo;
  double hi;
  double level;
} LcInterval;

typedef struct LcGranularity {
  double r_seg;
  double cell_locality;
  double score;
} LcGranularity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Owned by the library.
 */
const char *lc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lc_version(void);

/**
 * Frees a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void lc_string_free(char *s);

/**
 * Builds a maze geometry from the text grid format (`#` wall, `.` open,
 * `*` path).
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum LcStatus lc_geometry_maze(const char *text, struct LcGeometry **out);

/**
 * The 81-cell Sudoku geometry.
 *
 * # Safety
 * `out` must be writable.
 */
enum LcStatus lc_geometry_sudoku(struct LcGeometry **out);

/**
 * ARC geometry from a `height x width` row-major color grid (0 is
 * background). `accepted`, when not null, receives whether the component
 * count passes the task filter.
 *
 * # Safety
 * `cells` must hold `height * width` values; `out` must be writable.
 */
enum LcStatus lc_geometry_arc(const int64_t *cells,
                              uintptr_t height,
                              uintptr_t width,
                              struct LcGeometry **out,
                              bool *accepted);

/**
 * Object-scene geometry from `n` xyz positions (`positions[3*i..3*i+3]`).
 * Objects are named `object0`, `object1`, ...
 *
 * # Safety
 * `positions` must hold `3 * n` values; `out` must be writable.
 */
enum LcStatus lc_geometry_object(const double *positions,
                                 uintptr_t n,
                                 uintptr_t k_target,
                                 struct LcGeometry **out);

/**
 * Parses the geometry JSON interchange format.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum LcStatus lc_geometry_from_json(const char *json, struct LcGeometry **out);

/**
 * Serializes a geometry; free the result with [`lc_string_free`].
 *
 * # Safety
 * `g` must be a live handle; `out` must be writable.
 */
enum LcStatus lc_geometry_to_json(const struct LcGeometry *g, char **out);

/**
 * # Safety
 * `g` must be null or a handle not yet freed.
 */
void lc_geometry_free(struct LcGeometry *g);

/**
 * Number of sites `P`; 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live handle.
 */
uintptr_t lc_geometry_len(const struct LcGeometry *g);

/**
 * Number of segments; 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live handle.
 */
uintptr_t lc_geometry_segment_count(const struct LcGeometry *g);

/**
 * Copies the `P` site ids into `sites`.
 *
 * # Safety
 * `g` must be a live handle; `sites` must hold `cap` values.
 */
enum LcStatus lc_geometry_sites(const struct LcGeometry *g, uintptr_t *sites, uintptr_t cap);

/**
 * Copies the `P*P` neighborhood mask, `mask[u*P + v]` true when site `u`
 * lies in `N(v)`.
 *
 * # Safety
 * `g` must be a live handle; `mask` must hold `cap` values.
 */
enum LcStatus lc_geometry_neighborhood_mask(const struct LcGeometry *g, bool *mask, uintptr_t cap);

/**
 * Expected local fraction of a uniform field, `Σ|N(v)| / P²`.
 *
 * # Safety
 * `g` must be a live handle; `out` must be writable.
 */
enum LcStatus lc_baseline(const struct LcGeometry *g, double *out);

/**
 * Share of off-diagonal ordered pairs that are near.
 *
 * # Safety
 * `g` must be a live handle; `out` must be writable.
 */
enum LcStatus lc_near_pair_baseline(const struct LcGeometry *g, double *out);

/**
 * Locality of `examples` impact matrices stored back to back
 * (`fields[e*P*P + u*P + v]`, target `u`, source `v`).
 *
 * `per_source`, when not null, receives `P` values with NaN for sources
 * that never had mass. `ci`, when not null, receives a bootstrap
 * interval over examples with `resamples` draws from `seed`; it needs at
 * least two examples.
 *
 * # Safety
 * Pointers must be valid for the sizes above.
 */
enum LcStatus lc_locality_score(const struct LcGeometry *g,
                                const double *fields,
                                uintptr_t examples,
                                double *mean,
                                double *per_source,
                                struct LcInterval *ci,
                                uintptr_t resamples,
                                uint64_t seed);

/**
 * Row-normalized diagonal concentration of a `p x p` kernel.
 *
 * # Safety
 * `k` must hold `p*p` values; `out` must be writable.
 */
enum LcStatus lc_cell_locality(const double *k, uintptr_t p, double *out);

/**
 * Segment granularity of a `P x P` kernel over the geometry's sites.
 *
 * # Safety
 * `k` must hold `P*P` values; `out` must be writable.
 */
enum LcStatus lc_granularity(const struct LcGeometry *g,
                             const double *k,
                             struct LcGranularity *out);

/**
 * Sudoku constraint-type mass fractions of an `81 x 81` kernel, in the
 * order box, row, column, other.
 *
 * # Safety
 * `k` must hold 6561 values; `out` must hold 4.
 */
enum LcStatus lc_constraint_fractions(const double *k, double *out);

/**
 * Neighborhood share of a `P x P` attention matrix.
 *
 * # Safety
 * `attn` must hold `P*P` values; `out` must be writable.
 */
enum LcStatus lc_attention_locality(const struct LcGeometry *g, const double *attn, double *out);

/**
 * Percentile bootstrap interval of the mean. `level` in (0, 1).
 *
 * # Safety
 * `xs` must hold `n` values; `out` must be writable.
 */
enum LcStatus lc_bootstrap_ci(const double *xs,
                              uintptr_t n,
                              double level,
                              uintptr_t resamples,
                              uint64_t seed,
                              struct LcInterval *out);

/**
 * Reads a trace directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum LcStatus lc_trace_read(const char *path, struct LcTrace **out);

/**
 * # Safety
 * `t` must be null or a handle not yet freed.
 */
void lc_trace_free(struct LcTrace *t);

/**
 * Number of captured fields; 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
uintptr_t lc_trace_field_count(const struct LcTrace *t);

/**
 * Label of field `i`, such as `H1L0/L`; free with [`lc_string_free`].
 *
 * # Safety
 * `t` must be a live handle; `out` must be writable.
 */
enum LcStatus lc_trace_field_label(const struct LcTrace *t, uintptr_t i, char **out);

/**
 * Dimensions `[examples, positions, dims]` of field `i`.
 *
 * # Safety
 * `t` must be a live handle; `dims` must hold 3 values.
 */
enum LcStatus lc_trace_field_dims(const struct LcTrace *t, uintptr_t i, uintptr_t *dims);

/**
 * Copies field `i` as row-major `[example][position][dim]` floats.
 *
 * # Safety
 * `t` must be a live handle; `data` must hold `cap` values.
 */
enum LcStatus lc_trace_field_data(const struct LcTrace *t, uintptr_t i, float *data, uintptr_t cap);

/**
 * Mean per-step state change of one level. Writes the step count to
 * `len`, then the curve into `deltas` when `cap` suffices.
 *
 * # Safety
 * `t` must be a live handle; `deltas` must hold `cap` values; `len` must
 * be writable.
 */
enum LcStatus lc_delta_curve(const struct LcTrace *t,
                             enum LcLevel level,
                             double *deltas,
                             uintptr_t cap,
                             uintptr_t *len);

/**
 * Builds a toy model from its JSON configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum LcStatus lc_model_from_json(const char *json, struct LcModel **out);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void lc_model_free(struct LcModel *m);

/**
 * Number of positions `T`; 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
uintptr_t lc_model_positions(const struct LcModel *m);

/**
 * Jacobian kernel `K[u*T + v] = ‖∂z_dst[u] / ∂z_src[v]‖_F` between two
 * labelled states. `eps > 0` selects central differences with that step;
 * `eps == 0` selects exact tangent propagation.
 *
 * # Safety
 * `tokens` must hold `n_tokens` values; `k` must hold `cap` values.
 */
enum LcStatus lc_model_jacobian(const struct LcModel *m,
                                const uintptr_t *tokens,
                                uintptr_t n_tokens,
                                const char *src,
                                const char *dst,
                                double eps,
                                double *k,
                                uintptr_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOCALITY_H */
