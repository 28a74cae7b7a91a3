/* Hierarchical knowledge distillation lab: C API.
 *
 * The core is a C++ library exposed here behind opaque handles and error
 * codes, so front ends (the bundled CLI, bindings, scripts) stay ABI-safe.
 *
 * Typical use:
 *   hkd_experiment* exp = NULL;
 *   if (hkd_experiment_open("config.json", &exp) != HKD_OK) {
 *     fprintf(stderr, "%s\n", hkd_last_error());
 *     return 1;
 *   }
 *   hkd_experiment_set_output_dir(exp, "out");
 *   hkd_status st = hkd_experiment_run_stage(exp, "pipeline");
 *   if (st != HKD_OK) fprintf(stderr, "%s\n", hkd_experiment_error(exp));
 *   hkd_experiment_close(exp);
 */
#ifndef HKD_H
#define HKD_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hkd_status {
  HKD_OK = 0,
  /* bad config, bad arguments, schema violations */
  HKD_ERROR_VALIDATION = 1,
  /* training/runtime failures, IO errors */
  HKD_ERROR_RUNTIME = 2
} hkd_status;

typedef struct hkd_experiment hkd_experiment;

const char* hkd_version(void);

/* Parses and validates the config file. On validation failure returns
 * HKD_ERROR_VALIDATION, leaves *out untouched and stores the collected
 * error list (one per line) in hkd_last_error(). */
hkd_status hkd_experiment_open(const char* config_path, hkd_experiment** out);
void hkd_experiment_close(hkd_experiment* exp);

/* Last error of a failed call on this handle. */
const char* hkd_experiment_error(const hkd_experiment* exp);
/* Last error of a failed open (thread-local). */
const char* hkd_last_error(void);

/* Overrides applied before the first stage runs. */
hkd_status hkd_experiment_set_output_dir(hkd_experiment* exp, const char* dir);
hkd_status hkd_experiment_set_seed(hkd_experiment* exp, uint64_t seed);
hkd_status hkd_experiment_set_jobs(hkd_experiment* exp, int32_t jobs);
hkd_status hkd_experiment_set_resume(hkd_experiment* exp, int32_t resume);

/* Stage is one of: gen-data, cluster, train-teachers, train-tas,
 * train-student, evaluate, report, pipeline. */
hkd_status hkd_experiment_run_stage(hkd_experiment* exp, const char* stage);

/* Canonical JSON of the resolved config (owned by the handle). */
const char* hkd_experiment_resolved_config(hkd_experiment* exp);

#ifdef __cplusplus
}
#endif

#endif /* HKD_H */
