#ifndef BLOCKSEARCH_H
#define BLOCKSEARCH_H

/* Generated by cbindgen from blocksearch-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of a fallible call.
 */
typedef enum BsStatus {
  BS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  BS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  BS_INVALID_UTF8 = 2,
  /**
   * Text failed to parse; see `bs_last_error`.
   */
  BS_PARSE_ERROR = 3,
  /**
   * A value violated its invariants; see `bs_last_error`.
   */
  BS_INVALID_CONFIG = 4,
  /**
   * Any other failure; see `bs_last_error`.
   */
  BS_RUNTIME_ERROR = 5,
} BsStatus;

/**
 * Opaque compiled-architecture handle.
 */
typedef struct BsArchGraph BsArchGraph;

/**
 * Opaque block configuration handle.
 */
typedef struct BsBlockConfig BsBlockConfig;

/**
 * Opaque macro-configuration handle.
 */
typedef struct BsMacroConfig BsMacroConfig;

/**
 * Opaque search-space handle.
 */
typedef struct BsSearchSpace BsSearchSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; do not free.
 */
const char *bs_version(void);

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread; do not free.
 */
const char *bs_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must have been returned by a `bs_*` function that documents caller
 * ownership, and must not have been freed already.
 */
void bs_string_free(char *s);

/**
 * Parses a block config such as
 * `conv(5)|sp_conv(1)|sp_conv(3)|rc_conv(3)+add_det`.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum BsStatus bs_config_parse(const char *text, struct BsBlockConfig **out);

/**
 * Formats a config back to its text form. Caller frees with
 * `bs_string_free`. Returns null on a null handle.
 *
 * # Safety
 * `config` must be a live handle from this library or null.
 */
char *bs_config_format(const struct BsBlockConfig *config);

/**
 * Canonical form of a config (add-type combiners sort their branches).
 *
 * # Safety
 * `config` must be a live handle; `out` a valid pointer.
 */
enum BsStatus bs_config_canonicalize(const struct BsBlockConfig *config,
                                     struct BsBlockConfig **out);

/**
 * Number of branches in a config; 0 on a null handle.
 *
 * # Safety
 * `config` must be a live handle or null.
 */
uint64_t bs_config_branch_count(const struct BsBlockConfig *config);

/**
 * Releases a config handle.
 *
 * # Safety
 * `config` must be a live handle from this library (or null) and is invalid
 * afterwards.
 */
void bs_config_free(struct BsBlockConfig *config);

/**
 * Parses a space spec such as `b=4,ops=*,combiners=*`; the empty string is
 * the full default space.
 *
 * # Safety
 * `spec` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum BsStatus bs_space_parse(const char *spec, struct BsSearchSpace **out);

/**
 * Number of distinct configs in the space; 0 on a null handle.
 *
 * # Safety
 * `space` must be a live handle or null.
 */
uint64_t bs_space_size(const struct BsSearchSpace *space);

/**
 * Samples `count` configs exactly as a search run with this master seed
 * would (per-index derived streams, duplicates redrawn). Returns the configs
 * newline-separated; caller frees with `bs_string_free`.
 *
 * # Safety
 * `space` must be a live handle or null.
 */
char *bs_space_sample_lines(const struct BsSearchSpace *space,
                            uint64_t master_seed,
                            uint64_t count);

/**
 * Releases a space handle.
 *
 * # Safety
 * `space` must be a live handle from this library (or null).
 */
void bs_space_free(struct BsSearchSpace *space);

/**
 * Builds a macro config. Input is height x width x channels.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum BsStatus bs_macro_new(uint64_t stages,
                           uint64_t repeats,
                           uint64_t initial_filters,
                           uint64_t input_h,
                           uint64_t input_w,
                           uint64_t input_c,
                           uint64_t num_classes,
                           struct BsMacroConfig **out);

/**
 * The calibrated default macro config (3 stages, n=4, 96 filters, 32x32x3
 * inputs, 10 classes).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum BsStatus bs_macro_default(struct BsMacroConfig **out);

/**
 * Releases a macro-config handle.
 *
 * # Safety
 * `macro_config` must be a live handle from this library (or null).
 */
void bs_macro_free(struct BsMacroConfig *macro_config);

/**
 * Compiles a block config into a full network graph with inferred shapes.
 *
 * # Safety
 * `config` and `macro_config` must be live handles; `out` a valid pointer.
 */
enum BsStatus bs_graph_build(const struct BsBlockConfig *config,
                             const struct BsMacroConfig *macro_config,
                             struct BsArchGraph **out);

/**
 * Total trainable parameters; 0 on a null handle.
 *
 * # Safety
 * `graph` must be a live handle or null.
 */
uint64_t bs_graph_param_count(const struct BsArchGraph *graph);

/**
 * Total multiply-accumulates for one example; 0 on a null handle.
 *
 * # Safety
 * `graph` must be a live handle or null.
 */
uint64_t bs_graph_mac_count(const struct BsArchGraph *graph);

/**
 * Number of layer nodes; 0 on a null handle.
 *
 * # Safety
 * `graph` must be a live handle or null.
 */
uint64_t bs_graph_node_count(const struct BsArchGraph *graph);

/**
 * Deterministic human-readable graph listing. Caller frees with
 * `bs_string_free`; null on a null handle.
 *
 * # Safety
 * `graph` must be a live handle or null.
 */
char *bs_graph_describe(const struct BsArchGraph *graph);

/**
 * SHA-256 hex of the graph description (the hash checkpoints are bound to).
 * Caller frees with `bs_string_free`; null on a null handle.
 *
 * # Safety
 * `graph` must be a live handle or null.
 */
char *bs_graph_hash(const struct BsArchGraph *graph);

/**
 * Releases a graph handle.
 *
 * # Safety
 * `graph` must be a live handle from this library (or null).
 */
void bs_graph_free(struct BsArchGraph *graph);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* BLOCKSEARCH_H */
