#ifndef EAG_H
#define EAG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EagStatus {
  EAG_STATUS_OK = 0,
  EAG_STATUS_NULL_POINTER = 1,
  EAG_STATUS_INVALID_UTF8 = 2,
  EAG_STATUS_CONFIG = 3,
  EAG_STATUS_DATA = 4,
  EAG_STATUS_IO = 5,
  EAG_STATUS_TRANSPORT = 6,
  EAG_STATUS_OUT_OF_RANGE = 7,
  EAG_STATUS_PANIC = 8,
} EagStatus;

/**
 * Candidate examples from a pivot join, sorted by (left, right).
 */
typedef struct EagCandidates EagCandidates;

/**
 * A loaded bitext.
 */
typedef struct EagCorpus EagCorpus;

/**
 * Token counts used to draw noise tokens.
 */
typedef struct EagVocab EagVocab;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next library call on the same thread.
 */
const char *eag_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void eag_string_free(char *s);

/**
 * Token edit distance between two whitespace-tokenized sentences.
 *
 * # Safety
 * `a` and `b` must be NUL-terminated strings; `out` must be writable.
 */
enum EagStatus eag_edit_distance(const char *a, const char *b, size_t *out_distance);

/**
 * Loads a line-aligned bitext.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out_corpus` must be writable.
 */
enum EagStatus eag_corpus_load(const char *pivot_path,
                               const char *other_path,
                               const char *pivot_lang,
                               const char *other_lang,
                               bool case_fold,
                               struct EagCorpus **out_corpus);

/**
 * # Safety
 * `corpus` must be a live handle; `out_len` must be writable.
 */
enum EagStatus eag_corpus_len(const struct EagCorpus *corpus, size_t *out_len);

/**
 * # Safety
 * `corpus` must be null or a handle from `eag_corpus_load` not yet freed.
 */
void eag_corpus_free(struct EagCorpus *corpus);

/**
 * Vocabulary of the non-pivot side of `corpus`.
 *
 * # Safety
 * `corpus` must be a live handle; `out_vocab` must be writable.
 */
enum EagStatus eag_vocab_from_corpus(const struct EagCorpus *corpus, struct EagVocab **out_vocab);

/**
 * # Safety
 * `vocab` must be null or a live handle.
 */
void eag_vocab_free(struct EagVocab *vocab);

/**
 * Noises one sentence with uniform operation weights. The same
 * (`seed`, `stream`, `index`) always gives the same result.
 *
 * # Safety
 * String arguments must be NUL-terminated; `vocab` must be a live handle;
 * `out_text` must be writable. The result is freed with `eag_string_free`.
 */
enum EagStatus eag_noise_sentence(const char *sentence,
                                  const struct EagVocab *vocab,
                                  double beta,
                                  uint64_t seed,
                                  const char *stream,
                                  size_t index,
                                  char **out_text);

/**
 * Joins two bitexts sharing a pivot language at threshold `gamma` with
 * default settings otherwise.
 *
 * # Safety
 * `left` and `right` must be live handles; `out_candidates` must be writable.
 */
enum EagStatus eag_extract(const struct EagCorpus *left,
                           const struct EagCorpus *right,
                           double gamma,
                           struct EagCandidates **out_candidates);

/**
 * # Safety
 * `candidates` must be a live handle; `out_len` must be writable.
 */
enum EagStatus eag_candidates_len(const struct EagCandidates *candidates, size_t *out_len);

/**
 * Sentence indices and token distance of candidate `i`.
 *
 * # Safety
 * `candidates` must be a live handle; out pointers must be writable.
 */
enum EagStatus eag_candidates_get(const struct EagCandidates *candidates,
                                  size_t i,
                                  size_t *out_left_index,
                                  size_t *out_right_index,
                                  size_t *out_distance);

/**
 * Writes the candidates as JSON lines.
 *
 * # Safety
 * `candidates` must be a live handle; `path` must be NUL-terminated.
 */
enum EagStatus eag_candidates_write_jsonl(const struct EagCandidates *candidates, const char *path);

/**
 * # Safety
 * `candidates` must be null or a live handle.
 */
void eag_candidates_free(struct EagCandidates *candidates);

/**
 * Temperature sampling probabilities `n_i^(1/T) / sum_j n_j^(1/T)`.
 *
 * # Safety
 * `counts` and `out_probabilities` must each point to `n` elements.
 */
enum EagStatus eag_temperature_probabilities(const uint64_t *counts,
                                             size_t n,
                                             double temperature,
                                             double *out_probabilities);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EAG_H */
