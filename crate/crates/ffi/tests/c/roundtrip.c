/* Offline build, online solve and reconstruction through the C header. */
#include <stdio.h>
#include <stdlib.h>

#include "moldflux.h"

#define CHECK(call)                                                  \
  do {                                                               \
    MfStatus s_ = (call);                                            \
    if (s_ != MF_OK) {                                               \
      char msg[256];                                                 \
      mf_last_error_message(msg, sizeof msg);                        \
      fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_, msg);  \
      return 1;                                                      \
    }                                                                \
  } while (0)

int main(void) {
  MfCase *c = NULL;
  MfArtifact *a = NULL;
  CHECK(mf_case_analytical(10, 10, 10, 4, &c));
  size_t m = mf_case_sensor_count(c), nf = mf_case_flux_len(c);
  CHECK(mf_offline_build(c, 0.5, &a));

  double *t = malloc(m * sizeof *t), *w = malloc(m * sizeof *w), *g = malloc(nf * sizeof *g);
  CHECK(mf_case_clean_readings(c, t, m));
  CHECK(mf_online_solve(a, t, m, 0, 0.0, 0.0, w, m));
  CHECK(mf_reconstruct(a, w, m, g, nf));
  double l2, linf;
  CHECK(mf_case_flux_error(c, g, nf, &l2, &linf));
  printf("%s %zu %zu %.3e\n", mf_version(), m, nf, l2);

  free(t);
  free(w);
  free(g);
  mf_artifact_free(a);
  mf_case_free(c);
  return l2 < 1e-2 ? 0 : 1;
}
