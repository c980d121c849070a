#ifndef CSFORGE_H
#define CSFORGE_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CsfStatus {
  CSF_STATUS_OK = 0,
  CSF_STATUS_NULL_POINTER = 1,
  CSF_STATUS_INVALID_UTF8 = 2,
  CSF_STATUS_INVALID_ARGUMENT = 3,
  CSF_STATUS_IO = 4,
  CSF_STATUS_PARSE = 5,
  CSF_STATUS_UNSUPPORTED_VERSION = 6,
  CSF_STATUS_MODEL = 7,
  CSF_STATUS_PANIC = 8,
} CsfStatus;

/**
 * Loaded pointer-generator with its vocabulary.
 */
typedef struct CsfGenerator CsfGenerator;

/**
 * Loaded language model with its word and optional tag vocabularies.
 */
typedef struct CsfLanguageModel CsfLanguageModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *csf_version(void);

/**
 * Message for the last failed call on this thread, or NULL after a
 * success. Valid until the next call on the same thread.
 */
const char *csf_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void csf_string_free(char *s);

/**
 * Cleans and tokenizes one utterance; tokens are joined by single spaces.
 *
 * # Safety
 * `input` must be a NUL-terminated string; `out` must be writable.
 */
enum CsfStatus csf_tokenize(const char *input, char **out);

/**
 * Corpus BLEU (0..100) over newline-separated, whitespace-tokenized lines.
 *
 * # Safety
 * Both strings must be NUL-terminated; `score` must be writable.
 */
enum CsfStatus csf_bleu(const char *hypotheses, const char *references, double *score);

/**
 * Code-switched candidates allowed by the equivalence constraint, one per
 * line. `alignment` uses `i-j` pairs, L1 index first.
 *
 * # Safety
 * All strings must be NUL-terminated; `out` must be writable.
 */
enum CsfStatus csf_ec_generate(const char *l1,
                               const char *l2,
                               const char *alignment,
                               size_t max_outputs,
                               char **out);

/**
 * Loads `generator.csfg` and `generator.vocab` from a model directory.
 *
 * # Safety
 * `model_dir` must be NUL-terminated; `out` must be writable.
 */
enum CsfStatus csf_generator_load(const char *model_dir, struct CsfGenerator **out);

/**
 * Beam-decodes one pair. Each output line is `rank<TAB>logprob<TAB>tokens`.
 *
 * # Safety
 * `generator` must come from [`csf_generator_load`]; strings must be
 * NUL-terminated; `out` must be writable.
 */
enum CsfStatus csf_generator_decode(const struct CsfGenerator *generator,
                                    const char *l1,
                                    const char *l2,
                                    size_t beam,
                                    size_t n_best,
                                    char **out);

/**
 * # Safety
 * `generator` must come from [`csf_generator_load`] or be NULL.
 */
void csf_generator_free(struct CsfGenerator *generator);

/**
 * Loads `lm.csfg`, `lm.vocab` and, for tagged models, `lm.pos.vocab`.
 *
 * # Safety
 * `model_dir` must be NUL-terminated; `out` must be writable.
 */
enum CsfStatus csf_lm_load(const char *model_dir, struct CsfLanguageModel **out);

/**
 * Whether the model needs a tag line per utterance.
 *
 * # Safety
 * `lm` must come from [`csf_lm_load`].
 */
bool csf_lm_has_pos(const struct CsfLanguageModel *lm);

/**
 * Perplexity over newline-separated utterances. `tags` holds one tag line
 * per utterance and is required exactly when the model is tagged.
 * `tokens` may be NULL.
 *
 * # Safety
 * `lm` must come from [`csf_lm_load`]; strings must be NUL-terminated;
 * `perplexity_out` must be writable.
 */
enum CsfStatus csf_lm_perplexity(const struct CsfLanguageModel *lm,
                                 const char *utterances,
                                 const char *tags,
                                 double *perplexity_out,
                                 size_t *tokens);

/**
 * # Safety
 * `lm` must come from [`csf_lm_load`] or be NULL.
 */
void csf_lm_free(struct CsfLanguageModel *lm);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSFORGE_H */
