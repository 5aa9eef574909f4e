/* Exercises the shared library from plain C. */

#include <math.h>
#include <stdio.h>
#include <string.h>

#include "sflga/sflga.h"

static int failures = 0;

#define EXPECT(cond)                                              \
  do {                                                            \
    if (!(cond)) {                                                \
      fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #cond);  \
      ++failures;                                                 \
    }                                                             \
  } while (0)

static const char* kSmall =
    "{\"clients\": 2, \"network\": {\"dims\": [6, 5, 3]},"
    " \"dataset\": {\"classes\": 3, \"eval_samples\": 30},"
    " \"partition\": {\"samples_per_client\": [15, 15]},"
    " \"training\": {\"rounds\": 3, \"batch_size\": 5}}";

int main(void) {
  sflga_config* cfg = NULL;
  EXPECT(sflga_config_parse(kSmall, &cfg) == SFLGA_OK);

  EXPECT(sflga_config_set(cfg, "system.bandwidth_hz", "5e6") == SFLGA_OK);
  EXPECT(sflga_config_set(cfg, "system.bandwith_hz", "5e6") == SFLGA_VALIDATION_ERROR);
  EXPECT(strstr(sflga_last_error(), "system.bandwith_hz") != NULL);
  EXPECT(sflga_config_set(cfg, "clients", "0") == SFLGA_VALIDATION_ERROR);
  EXPECT(sflga_config_set(cfg, "clients", "{") == SFLGA_PARSE_ERROR);
  EXPECT(strcmp(sflga_status_string(SFLGA_VALIDATION_ERROR), "validation-error") == 0);
  EXPECT(strcmp(sflga_status_string(SFLGA_OK), "ok") == 0);

  /* A failed set leaves the previous document in place. */
  char* dump = NULL;
  EXPECT(sflga_config_dump(cfg, &dump) == SFLGA_OK);
  EXPECT(dump && strstr(dump, "5000000") != NULL);
  EXPECT(dump && strstr(dump, "bandwith") == NULL);
  sflga_string_free(dump);

  sflga_run* run = NULL;
  EXPECT(sflga_run_create(cfg, &run) == SFLGA_OK);
  int done = 0;
  int rounds = 0;
  sflga_round row;
  while (!done && rounds < 10) {
    EXPECT(sflga_run_step(run, &row, &done) == SFLGA_OK);
    EXPECT(row.round == rounds);
    EXPECT(row.accuracy >= 0.0 && row.accuracy <= 1.0);
    EXPECT(isnan(row.reward));
    EXPECT(row.uplink_bytes > 0);
    ++rounds;
  }
  EXPECT(rounds == 3);
  sflga_run_free(run);

  char* solved = NULL;
  EXPECT(sflga_solve(cfg, &solved) == SFLGA_OK);
  EXPECT(solved && strstr(solved, "\"chi\"") != NULL);
  sflga_string_free(solved);

  EXPECT(sflga_train(cfg, "/nonexistent/dir/out.csv", "csv") == SFLGA_IO_ERROR);
  EXPECT(sflga_train(cfg, "/tmp/sflga_capi.csv", "xml") == SFLGA_INVALID_ARGUMENT);
  EXPECT(sflga_train(NULL, "/tmp/sflga_capi.csv", "csv") == SFLGA_INVALID_ARGUMENT);

  sflga_config* missing = NULL;
  EXPECT(sflga_config_load("/nonexistent/config.json", &missing) == SFLGA_IO_ERROR);
  EXPECT(missing == NULL);

  sflga_config_free(cfg);
  sflga_config_free(NULL);
  sflga_run_free(NULL);

  if (failures) {
    fprintf(stderr, "%d C API checks failed\n", failures);
    return 1;
  }
  printf("C API checks passed\n");
  return 0;
}
