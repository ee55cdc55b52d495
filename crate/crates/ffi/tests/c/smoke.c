#include <stdio.h>
#include <string.h>

#include "mra.h"

#define CHECK(call)                                                        \
  do {                                                                     \
    MraStatus s_ = (call);                                                 \
    if (s_ != MRA_STATUS_OK) {                                             \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, mra_last_error()); \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(void) {
  MraModel *model = NULL;
  CHECK(mra_model_from_json("{\"model\":\"cryo_em\",\"L\":2,\"R\":5}", &model));

  MraBound bound;
  CHECK(mra_model_bound(model, &bound));
  printf("N=%zu M=%zu K_max=%lld\n", bound.n, bound.m, (long long)bound.k_max);

  MraBasis *basis = NULL;
  CHECK(mra_basis_random(model, 1, &basis));
  MraVerdict verdict;
  double gap = 0.0;
  CHECK(mra_certify(model, basis, (size_t)bound.k_max, 5, 1, &verdict, &gap));
  printf("verdict=%d\n", (int)verdict);

  MraSignal *f = NULL;
  CHECK(mra_signal_random(model, basis, 4, 2, &f));
  MraGrams *grams = NULL;
  CHECK(mra_grams_from_signal(f, &grams));
  MraSignal *est = NULL;
  MraRecoveryInfo info;
  CHECK(mra_recover(grams, basis, 4, 0, 2, &est, &info));
  printf("converged=%d\n", (int)info.converged);

  MraModel *bad = NULL;
  MraStatus s = mra_model_from_json("{\"model\":\"torus\"}", &bad);
  printf("bad=%d error=%s\n", (int)s, mra_last_error() ? "set" : "unset");

  mra_signal_free(est);
  mra_grams_free(grams);
  mra_signal_free(f);
  mra_basis_free(basis);
  mra_model_free(model);
  return 0;
}
