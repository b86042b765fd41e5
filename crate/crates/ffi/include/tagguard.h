#ifndef TAGGUARD_H
#define TAGGUARD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes shared by every function.
 */
typedef enum TgStatus {
  TG_STATUS_OK = 0,
  TG_STATUS_NULL_POINTER = 1,
  TG_STATUS_INVALID_UTF8 = 2,
  TG_STATUS_PARSE = 3,
  TG_STATUS_INVALID_ARGUMENT = 4,
  TG_STATUS_CONFIG = 5,
  TG_STATUS_MODEL = 6,
  TG_STATUS_IO = 7,
  TG_STATUS_PANIC = 8,
  TG_STATUS_INTERNAL = 9,
} TgStatus;

typedef enum TgAttackKind {
  TG_ATTACK_KIND_OVERLOAD = 0,
  TG_ATTACK_KIND_PIGGYBACK = 1,
} TgAttackKind;

/*
 A generated batch of bogus folksonomies.
 */
typedef struct TgBatch TgBatch;

/*
 A loaded folksonomy corpus.
 */
typedef struct TgCorpus TgCorpus;

/*
 A trained classifier bound to the vocabulary it was trained with.
 */
typedef struct TgModel TgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failure on this thread, or null. The pointer stays
 valid until the next failing call on the same thread.
 */
const char *tg_last_error(void);

/*
 Static version string.
 */
const char *tg_version(void);

/*
 Frees a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void tg_string_free(char *s);

/*
 Parses dataset text (tab-separated user, resource, comma-joined tags).

 # Safety
 `text` must be a nul-terminated string; `out` must be writable.
 */
enum TgStatus tg_corpus_parse(const char *text, struct TgCorpus **out);

/*
 Loads a dataset file.

 # Safety
 `path` must be a nul-terminated string; `out` must be writable.
 */
enum TgStatus tg_corpus_load(const char *path, struct TgCorpus **out);

/*
 Generates the synthetic desk corpus from a TOML config (its `[synth]`
 section); null means defaults.

 # Safety
 `config_toml` must be null or nul-terminated; `out` must be writable.
 */
enum TgStatus tg_corpus_synth(const char *config_toml, struct TgCorpus **out);

/*
 # Safety
 `corpus` must be a live handle; `out` must be writable.
 */
enum TgStatus tg_corpus_len(const struct TgCorpus *corpus, size_t *out);

/*
 Statistics as JSON: folksonomies, users, unique_tags, size_histogram.

 # Safety
 `corpus` must be a live handle; `out` must be writable.
 */
enum TgStatus tg_corpus_stats_json(const struct TgCorpus *corpus, char **out);

/*
 # Safety
 `corpus` must be null or a live handle, freed at most once.
 */
void tg_corpus_free(struct TgCorpus *corpus);

/*
 Generates an attack batch at `ratio` of the corpus size with default pools.

 # Safety
 `corpus` must be a live handle; `out` must be writable.
 */
enum TgStatus tg_attack_generate(const struct TgCorpus *corpus,
                                 enum TgAttackKind kind,
                                 double ratio,
                                 uint64_t seed,
                                 struct TgBatch **out);

/*
 # Safety
 `batch` must be a live handle; `out` must be writable.
 */
enum TgStatus tg_batch_len(const struct TgBatch *batch, size_t *out);

/*
 The batch in the dataset text format.

 # Safety
 `batch` must be a live handle; `out` must be writable.
 */
enum TgStatus tg_batch_dataset(const struct TgBatch *batch, char **out);

/*
 Returns a new corpus holding `corpus` plus the batch.

 # Safety
 Both handles must be live; `out` must be writable.
 */
enum TgStatus tg_corpus_inject(const struct TgCorpus *corpus,
                               const struct TgBatch *batch,
                               struct TgCorpus **out);

/*
 # Safety
 `batch` must be null or a live handle, freed at most once.
 */
void tg_batch_free(struct TgBatch *batch);

/*
 D_KL(p ‖ q) for two probability vectors of length `n`.

 # Safety
 `p` and `q` must point to `n` readable doubles; `out` must be writable.
 */
enum TgStatus tg_kl_divergence(const double *p, const double *q, size_t n, double *out);

/*
 Trains `classifier` ("nb", "svm" or "nn") on the corpus plus a training
 batch generated from the config's `[attack]` and `[run] training_ratio`.
 The config may be null.

 # Safety
 `corpus` must be a live handle, strings nul-terminated, `out` writable.
 */
enum TgStatus tg_model_train(const struct TgCorpus *corpus,
                             const char *classifier,
                             const char *config_toml,
                             struct TgModel **out);

/*
 Serialises the model with its vocabulary fingerprint.

 # Safety
 `model` must be a live handle; `out` must be writable.
 */
enum TgStatus tg_model_to_json(const struct TgModel *model, char **out);

/*
 Loads a saved model; `corpus` supplies the vocabulary and must match the
 fingerprint stored in `json`.

 # Safety
 `corpus` must be a live handle, `json` nul-terminated, `out` writable.
 */
enum TgStatus tg_model_from_json(const struct TgCorpus *corpus,
                                 const char *json,
                                 struct TgModel **out);

/*
 Probability that a folksonomy with the given tags is bogus.

 # Safety
 `model` must be a live handle and `tags` must point to `n` nul-terminated
 strings; `out` must be writable.
 */
enum TgStatus tg_model_bogus_probability(const struct TgModel *model,
                                         const char *const *tags,
                                         size_t n,
                                         double *out);

/*
 # Safety
 `model` must be null or a live handle, freed at most once.
 */
void tg_model_free(struct TgModel *model);

/*
 Runs the evaluation described by `config_toml` (null for defaults) over
 `corpus` and returns the report as JSON. The config's `[dataset]` section
 is ignored.

 # Safety
 `corpus` must be a live handle, `config_toml` null or nul-terminated,
 `out` writable.
 */
enum TgStatus tg_evaluate_json(const struct TgCorpus *corpus, const char *config_toml, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAGGUARD_H */
