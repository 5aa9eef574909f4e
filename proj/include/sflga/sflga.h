#ifndef SFLGA_SFLGA_H
#define SFLGA_SFLGA_H

/* C interface to the split federated learning simulator. Every call returns
 * an sflga_status; on failure sflga_last_error() holds a message for the
 * calling thread. Strings handed out by the library are released with
 * sflga_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(SFLGA_BUILDING_LIBRARY)
#define SFLGA_API __attribute__((visibility("default")))
#else
#define SFLGA_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sflga_status {
  SFLGA_OK = 0,
  SFLGA_INVALID_ARGUMENT = 1,
  SFLGA_NUMERIC_OVERFLOW = 2,
  SFLGA_CONSTRAINT_VIOLATION = 3,
  SFLGA_INFEASIBLE_LATENCY = 4,
  SFLGA_INFEASIBLE_PROBLEM = 5,
  SFLGA_PARSE_ERROR = 6,
  SFLGA_VALIDATION_ERROR = 7,
  SFLGA_IO_ERROR = 8,
  SFLGA_INTERNAL_ERROR = 9
} sflga_status;

typedef struct sflga_config sflga_config;
typedef struct sflga_run sflga_run;

/* One training round as reported by sflga_run_step. reward is NaN unless
 * the cut is chosen by the planner. */
typedef struct sflga_round {
  int round;
  int cut;
  double loss;
  double accuracy;
  double chi;
  double psi;
  double latency_s;
  uint64_t uplink_bytes;
  uint64_t downlink_bytes;
  double reward;
} sflga_round;

SFLGA_API const char* sflga_status_string(sflga_status status);
SFLGA_API const char* sflga_last_error(void);
SFLGA_API void sflga_string_free(char* text);

/* Configuration documents. Loading validates; sflga_config_set takes a
 * dotted path and a JSON value ("20e6", "\"sfl\"", "[1,2]") and revalidates. */
SFLGA_API sflga_status sflga_config_load(const char* path, sflga_config** out);
SFLGA_API sflga_status sflga_config_parse(const char* json_text, sflga_config** out);
SFLGA_API sflga_status sflga_config_set(sflga_config* config, const char* path,
                                        const char* json_value);
SFLGA_API sflga_status sflga_config_dump(const sflga_config* config, char** json_out);
SFLGA_API void sflga_config_free(sflga_config* config);

/* format is "csv" or "jsonl". */
SFLGA_API sflga_status sflga_train(const sflga_config* config, const char* out_path,
                                   const char* format);
/* axes_json: {"dotted.path": [values...], ...}. threads <= 0 uses one. */
SFLGA_API sflga_status sflga_sweep(const sflga_config* config, const char* axes_json,
                                   int threads, const char* out_path, const char* format);
/* checkpoint_path and rewards_path may be NULL. */
SFLGA_API sflga_status sflga_plan(const sflga_config* config, const char* out_path,
                                  const char* format, const char* checkpoint_path,
                                  const char* rewards_path);
SFLGA_API sflga_status sflga_solve(const sflga_config* config, char** json_out);
/* passed is set to 1 when every bound holds. csv_out may be NULL. */
SFLGA_API sflga_status sflga_verify(int seeds, int rounds, uint64_t seed, char** text_out,
                                    char** csv_out, int* passed);

/* Round-by-round training. */
SFLGA_API sflga_status sflga_run_create(const sflga_config* config, sflga_run** out);
/* *done becomes 1 once every configured round has run; row may be NULL. */
SFLGA_API sflga_status sflga_run_step(sflga_run* run, sflga_round* row, int* done);
SFLGA_API void sflga_run_free(sflga_run* run);

#ifdef __cplusplus
}
#endif

#endif
