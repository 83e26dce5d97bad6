#ifndef MADNET_H
#define MADNET_H

/* Generated by cbindgen from the madnet-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum {
  MadnetOk = 0,
  MadnetValidationError = 1,
  MadnetRuntimeError = 2,
  MadnetNullPointer = 3,
  MadnetInvalidUtf8 = 4,
} MadnetStatus;

typedef struct MadnetCorpus MadnetCorpus;

typedef struct MadnetGraph MadnetGraph;

typedef struct MadnetModel MadnetModel;

typedef struct MadnetVocab MadnetVocab;

/**
 * Corpus-level scores for one hypothesis/reference pair.
 */
typedef struct {
  double bleu_1;
  double bleu_2;
  double bleu_3;
  double bleu_4;
  double rouge_l;
  double meteor;
} MadnetScores;

/**
 * Library version as a static NUL-terminated string; do not free.
 */
const char *madnet_version(void);

/**
 * Message for the most recent error on this thread, or NULL. The caller
 * owns the returned string (free with `madnet_string_free`).
 */
char *madnet_last_error(void);

/**
 * Frees a string previously returned by this library.
 *
 * # Safety
 * `s` must be NULL or a pointer obtained from a madnet function that
 * transfers string ownership, not yet freed.
 */
void madnet_string_free(char *s);

/**
 * Parses a JSON-Lines corpus file into a corpus handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 */
MadnetStatus madnet_corpus_parse_file(const char *path, MadnetCorpus **out);

/**
 * # Safety
 * `corpus` must be NULL or a live corpus handle; it is consumed.
 */
void madnet_corpus_free(MadnetCorpus *corpus);

/**
 * # Safety
 * `corpus` must be a live corpus handle.
 */
uintptr_t madnet_corpus_len(const MadnetCorpus *corpus);

/**
 * Fraction of non-first context utterances lacking addressee labels.
 *
 * # Safety
 * `corpus` must be a live corpus handle; `out` a valid pointer.
 */
MadnetStatus madnet_corpus_missing_label_rate(const MadnetCorpus *corpus, double *out);

/**
 * Builds a vocabulary over every utterance and response in the corpus.
 *
 * # Safety
 * `corpus` must be a live corpus handle; `out` a valid pointer.
 */
MadnetStatus madnet_vocab_build(const MadnetCorpus *corpus, uintptr_t min_freq, MadnetVocab **out);

/**
 * Loads a `{token: id}` JSON vocabulary file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
MadnetStatus madnet_vocab_load(const char *path, MadnetVocab **out);

/**
 * # Safety
 * `vocab` must be NULL or a live vocab handle; it is consumed.
 */
void madnet_vocab_free(MadnetVocab *vocab);

/**
 * # Safety
 * `vocab` must be a live vocab handle.
 */
uintptr_t madnet_vocab_size(const MadnetVocab *vocab);

/**
 * Tokenizes text into `out_ids` (capacity `cap`); `written` receives the
 * token count, which is at most `max_utt_len`.
 *
 * # Safety
 * `vocab` must be a live handle; `text` NUL-terminated; `out_ids` must
 * point to at least `cap` writable u32 slots; `written` a valid pointer.
 */
MadnetStatus madnet_vocab_tokenize(const MadnetVocab *vocab,
                                   const char *text,
                                   uintptr_t max_utt_len,
                                   uint32_t *out_ids,
                                   uintptr_t cap,
                                   uintptr_t *written);

/**
 * Builds the fully-connected heterogeneous graph for one instance.
 *
 * # Safety
 * `corpus` and `vocab` must be live handles; `out` a valid pointer.
 */
MadnetStatus madnet_graph_build(const MadnetCorpus *corpus,
                                const MadnetVocab *vocab,
                                uintptr_t index,
                                MadnetGraph **out);

/**
 * # Safety
 * `graph` must be NULL or a live graph handle; it is consumed.
 */
void madnet_graph_free(MadnetGraph *graph);

/**
 * # Safety
 * `graph` must be a live graph handle.
 */
uintptr_t madnet_graph_edge_count(const MadnetGraph *graph);

/**
 * Edge type code (0..=9) from node p to node q. Nodes are addressed by
 * kind (0 = utterance, 1 = interlocutor) and index; the response node is
 * utterance `M`.
 *
 * # Safety
 * `graph` must be a live graph handle; `out_code` a valid pointer.
 */
MadnetStatus madnet_graph_edge_type(const MadnetGraph *graph,
                                    bool p_is_interlocutor,
                                    uintptr_t p_index,
                                    bool q_is_interlocutor,
                                    uintptr_t q_index,
                                    uint8_t *out_code);

/**
 * Loads a model from a checkpoint written by the `madnet` CLI (the
 * checkpoint carries its own model configuration).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
MadnetStatus madnet_model_load(const char *path, MadnetModel **out);

/**
 * # Safety
 * `model` must be NULL or a live model handle; it is consumed.
 */
void madnet_model_free(MadnetModel *model);

/**
 * Teacher-forced negative log-likelihood of instance `index`'s response.
 *
 * # Safety
 * All handles must be live; `out_nll` a valid pointer.
 */
MadnetStatus madnet_model_response_nll(const MadnetModel *model,
                                       const MadnetCorpus *corpus,
                                       const MadnetVocab *vocab,
                                       uintptr_t index,
                                       double *out_nll);

/**
 * Greedy-decodes a response for instance `index`, returning owned text.
 *
 * # Safety
 * All handles must be live; `out_text` a valid pointer. Free the returned
 * string with `madnet_string_free`.
 */
MadnetStatus madnet_model_generate(const MadnetModel *model,
                                   const MadnetCorpus *corpus,
                                   const MadnetVocab *vocab,
                                   uintptr_t index,
                                   char **out_text);

/**
 * Deduces the addressee of utterance `utt_index` in instance `index` by
 * scoring every earlier utterance as the assumed reply target.
 *
 * # Safety
 * All handles must be live; `out_target` a valid pointer.
 */
MadnetStatus madnet_model_deduce(const MadnetModel *model,
                                 const MadnetCorpus *corpus,
                                 const MadnetVocab *vocab,
                                 uintptr_t index,
                                 uintptr_t utt_index,
                                 uintptr_t *out_target);

/**
 * Scores one whitespace-tokenized hypothesis against one reference.
 *
 * # Safety
 * `hyp` and `reference` must be NUL-terminated strings; `out` must point
 * to a writable `MadnetScores`.
 */
MadnetStatus madnet_eval_pair(const char *hyp, const char *reference, MadnetScores *out);

#endif  /* MADNET_H */
