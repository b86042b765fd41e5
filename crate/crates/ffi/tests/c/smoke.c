#include <stdio.h>
#include <string.h>
#include "tagguard.h"

#define CHECK(call)                                                     \
  do {                                                                  \
    TgStatus s_ = (call);                                               \
    if (s_ != TG_STATUS_OK) {                                           \
      fprintf(stderr, "%s -> %d: %s\n", #call, s_, tg_last_error());    \
      return 1;                                                         \
    }                                                                   \
  } while (0)

int main(void) {
  TgCorpus *corpus = NULL;
  TgBatch *batch = NULL;
  size_t n = 0;
  char *json = NULL;
  double kl = -1.0;
  const double p[2] = {0.5, 0.5};

  CHECK(tg_corpus_synth("[synth]\nusers = 40\n", &corpus));
  CHECK(tg_corpus_len(corpus, &n));
  CHECK(tg_corpus_stats_json(corpus, &json));
  if (strstr(json, "\"users\":40") == NULL) return 2;
  tg_string_free(json);

  CHECK(tg_attack_generate(corpus, TG_ATTACK_KIND_OVERLOAD, 0.1, 3, &batch));
  CHECK(tg_batch_len(batch, &n));
  if (n == 0) return 3;
  CHECK(tg_kl_divergence(p, p, 2, &kl));
  if (kl > 1e-12) return 4;

  if (tg_corpus_parse("", &corpus) != TG_STATUS_PARSE) return 5;
  if (tg_last_error() == NULL) return 6;

  tg_batch_free(batch);
  tg_corpus_free(corpus);
  printf("ok %s\n", tg_version());
  return 0;
}
