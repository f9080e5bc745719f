/* SPDX-License-Identifier: MIT OR Apache-2.0 */

#ifndef TOKENTRAIL_H
#define TOKENTRAIL_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum TtStatus {
  TT_STATUS_OK = 0,
  // a required pointer argument was NULL
  TT_STATUS_NULL_ARGUMENT = 1,
  TT_STATUS_INVALID_UTF8 = 2,
  // malformed JSON, empty input, unknown model name and the like
  TT_STATUS_INVALID_ARGUMENT = 3,
  // token position, layer, block or token id past its bound
  TT_STATUS_OUT_OF_RANGE = 4,
  TT_STATUS_NOT_FOUND = 5,
  TT_STATUS_CONFLICT = 6,
  // a gloss update tried to change a fixed field
  TT_STATUS_IMMUTABLE = 7,
  // an import stream line is not a valid record
  TT_STATUS_PARSE = 8,
  // input longer than the model context
  TT_STATUS_TOO_LONG = 9,
  TT_STATUS_BUFFER_TOO_SMALL = 10,
  // file system failure, or a corrupt gloss log
  TT_STATUS_IO = 11,
  // weights could not be loaded or do not form a model
  TT_STATUS_MODEL = 12,
  // an internal panic was caught at the boundary
  TT_STATUS_PANIC = 13,
} TtStatus;

// Two-component PCA basis over residual states.
typedef struct TtBasis TtBasis;

// GPT-2-architecture model weights.
typedef struct TtModel TtModel;

// Durable gloss log. Writes are serialized internally.
typedef struct TtStore TtStore;

// Byte-level BPE tokenizer.
typedef struct TtTokenizer TtTokenizer;

// Every residual state of one forward pass.
typedef struct TtTrace TtTrace;

typedef struct TtModelConfig {
  size_t n_layers;
  size_t d_model;
  size_t n_heads;
  size_t vocab_size;
  size_t n_ctx;
} TtModelConfig;

typedef struct TtTraceShape {
  size_t n_tokens;
  // transformer blocks; each token has `n_layers + 1` states
  size_t n_layers;
  size_t d_model;
  size_t vocab_size;
} TtTraceShape;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, static storage.
const char *tt_version(void);

// Releases a string returned by this library. NULL is ignored.
void tt_string_free(char *s);

// Message for the most recent failure on this thread, or NULL after a
// success. The pointer stays valid until the next call into this library
// from the same thread.
const char *tt_last_error(void);

// Loads weights from a safetensors file or JSON manifest path, or
// generates them for `synthetic:small`, `synthetic:tiny` or
// `synthetic:micro`.
enum TtStatus tt_model_load(const char *source, struct TtModel **out);

void tt_model_free(struct TtModel *model);

enum TtStatus tt_model_config(const struct TtModel *model, struct TtModelConfig *out);

// Model identifier recorded on sessions.
enum TtStatus tt_model_id(const struct TtModel *model, char **out);

// Runs the model over `ids` and keeps every residual state.
enum TtStatus tt_model_trace(const struct TtModel *model,
                             const uint32_t *ids,
                             size_t n_ids,
                             struct TtTrace **out);

// Head-averaged attention of `block` as an `n_ids x n_ids` row-major
// matrix, query rows and key columns.
enum TtStatus tt_model_attention(const struct TtModel *model,
                                 const uint32_t *ids,
                                 size_t n_ids,
                                 size_t block,
                                 float *out,
                                 size_t cap,
                                 size_t *out_len);

// Top-`k` vocabulary readout of state `(token_pos, layer)`, descending.
// `normalized` applies the final layer norm first. `out_ids` and
// `out_scores` both need room for `k` entries (fewer if the vocabulary
// is smaller).
enum TtStatus tt_model_logit_lens(const struct TtModel *model,
                                  const struct TtTrace *trace,
                                  size_t token_pos,
                                  size_t layer,
                                  size_t k,
                                  bool normalized,
                                  uint32_t *out_ids,
                                  float *out_scores,
                                  size_t cap,
                                  size_t *out_len);

void tt_trace_free(struct TtTrace *trace);

enum TtStatus tt_trace_shape(const struct TtTrace *trace, struct TtTraceShape *out);

// Residual state `(token_pos, layer)`: `d_model` floats. Layer 0 is the
// embedding; layer `l` follows block `l - 1`.
enum TtStatus tt_trace_residual(const struct TtTrace *trace,
                                size_t token_pos,
                                size_t layer,
                                float *out,
                                size_t cap,
                                size_t *out_len);

// All `n_layers + 1` states of one token, layer-major.
enum TtStatus tt_trace_trajectory(const struct TtTrace *trace,
                                  size_t token_pos,
                                  float *out,
                                  size_t cap,
                                  size_t *out_len);

// Next-token logits at `token_pos`: `vocab_size` floats.
enum TtStatus tt_trace_logits(const struct TtTrace *trace,
                              size_t token_pos,
                              float *out,
                              size_t cap,
                              size_t *out_len);

// Cosine distance between consecutive states of one token: `n_layers`
// values in `[0, 2]`.
enum TtStatus tt_trace_shift_profile(const struct TtTrace *trace,
                                     size_t token_pos,
                                     double *out,
                                     size_t cap,
                                     size_t *out_len);

// Basis fitted over every state of every token in the trace.
enum TtStatus tt_basis_fit_session(const struct TtTrace *trace, struct TtBasis **out);

// Basis fitted over the states of one token only.
enum TtStatus tt_basis_fit_token(const struct TtTrace *trace,
                                 size_t token_pos,
                                 struct TtBasis **out);

void tt_basis_free(struct TtBasis *basis);

// Variance along the two components, descending; `out` holds 2 values.
enum TtStatus tt_basis_explained_variance(const struct TtBasis *basis, double *out);

// Component 0 or 1: `d_model` values, unit length.
enum TtStatus tt_basis_component(const struct TtBasis *basis,
                                 size_t index,
                                 double *out,
                                 size_t cap,
                                 size_t *out_len);

// Mean the basis is centered on: `d_model` values.
enum TtStatus tt_basis_mean(const struct TtBasis *basis, double *out, size_t cap, size_t *out_len);

// 2-D positions of one token's states, as `n_layers + 1` interleaved
// `(x, y)` pairs.
enum TtStatus tt_basis_project_trajectory(const struct TtBasis *basis,
                                          const struct TtTrace *trace,
                                          size_t token_pos,
                                          double *out,
                                          size_t cap,
                                          size_t *out_len);

// Opens (creating if absent) the log at `path`, replaying it.
enum TtStatus tt_store_open(const char *path, struct TtStore **out);

// A store that keeps nothing on disk.
enum TtStatus tt_store_in_memory(struct TtStore **out);

void tt_store_free(struct TtStore *store);

// Records a session; `*out` receives the session as JSON.
enum TtStatus tt_store_create_session(const struct TtStore *store,
                                      const char *prompt,
                                      const uint32_t *ids,
                                      size_t n_ids,
                                      const char *model_id,
                                      size_t n_layers,
                                      char **out);

enum TtStatus tt_store_get_session(const struct TtStore *store, const char *session_id, char **out);

// Creates a gloss from `{"session_id", "anchor", "body", "author"?,
// "tags"?}`; `*out` receives the stored gloss.
enum TtStatus tt_store_create_gloss(const struct TtStore *store,
                                    const char *gloss_json,
                                    char **out);

enum TtStatus tt_store_get_gloss(const struct TtStore *store, const char *gloss_id, char **out);

// Glosses of a session as a JSON array. `filter_json` may be NULL or an
// object with any of `token_pos`, `layer`, `tag`.
enum TtStatus tt_store_list_glosses(const struct TtStore *store,
                                    const char *session_id,
                                    const char *filter_json,
                                    char **out);

// Applies `{"body"?, "tags"?}`; an `anchor` field is refused with
// `TT_STATUS_IMMUTABLE`.
enum TtStatus tt_store_update_gloss(const struct TtStore *store,
                                    const char *gloss_id,
                                    const char *patch_json,
                                    char **out);

enum TtStatus tt_store_delete_gloss(const struct TtStore *store, const char *gloss_id);

// Newline-delimited session record followed by its live glosses.
enum TtStatus tt_store_export_session(const struct TtStore *store,
                                      const char *session_id,
                                      char **out);

// Imports an export stream atomically; `*out_count` receives the number
// of glosses added.
enum TtStatus tt_store_import(const struct TtStore *store,
                              const uint8_t *data,
                              size_t len,
                              size_t *out_count);

// The bundled GPT-2 tokenizer.
enum TtStatus tt_tokenizer_new_gpt2(struct TtTokenizer **out);

// A tokenizer from an `encoder.json` vocabulary and a `vocab.bpe` merge
// list.
enum TtStatus tt_tokenizer_from_files(const char *vocab_path,
                                      const char *merges_path,
                                      struct TtTokenizer **out);

void tt_tokenizer_free(struct TtTokenizer *tokenizer);

enum TtStatus tt_tokenizer_vocab_size(const struct TtTokenizer *tokenizer, size_t *out);

// Token ids of `text`.
enum TtStatus tt_tokenizer_encode(const struct TtTokenizer *tokenizer,
                                  const char *text,
                                  uint32_t *out,
                                  size_t cap,
                                  size_t *out_len);

// Text of `ids`; byte runs that are not valid UTF-8 become U+FFFD.
enum TtStatus tt_tokenizer_decode(const struct TtTokenizer *tokenizer,
                                  const uint32_t *ids,
                                  size_t n_ids,
                                  char **out);

// Raw bytes of `ids`, exactly as the vocabulary stores them.
enum TtStatus tt_tokenizer_decode_bytes(const struct TtTokenizer *tokenizer,
                                        const uint32_t *ids,
                                        size_t n_ids,
                                        uint8_t *out,
                                        size_t cap,
                                        size_t *out_len);

// Display label of one token, with a visible space marker.
enum TtStatus tt_tokenizer_token_text(const struct TtTokenizer *tokenizer, uint32_t id, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOKENTRAIL_H */
