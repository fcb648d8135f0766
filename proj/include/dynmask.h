/* C interface to the dynamic-masking simulation library.
 *
 * All functions are thread-compatible: handles must not be shared across
 * threads without external synchronization, but distinct handles are
 * independent. Error details for the calling thread are available from
 * dm_last_error() after any non-zero status.
 */
#ifndef DYNMASK_H
#define DYNMASK_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dm_status {
  DM_OK = 0,
  DM_ERR_CONFIG = 2,  /* malformed or inconsistent configuration */
  DM_ERR_NUMERIC = 3, /* numerical failure while running */
  DM_ERR_INVALID = 4  /* null handle or bad argument */
} dm_status;

/* A loaded, fully resolved scenario. */
typedef struct dm_scenario dm_scenario;
/* Result of a run/sweep/zeros/identify call; owns a JSON document. */
typedef struct dm_report dm_report;

const char* dm_version_string(void);

/* Message for the last failure on this thread; empty string if none. */
const char* dm_last_error(void);

dm_status dm_scenario_load(const char* path, dm_scenario** out);
dm_status dm_scenario_load_string(const char* json_text, dm_scenario** out);
void dm_scenario_free(dm_scenario* scenario);

/* Overrides applied after loading. */
dm_status dm_scenario_set_seed(dm_scenario* scenario, uint64_t seed);
dm_status dm_scenario_set_out_dir(dm_scenario* scenario, const char* dir);
/* placement: "d1" or "d2" */
dm_status dm_scenario_set_placement(dm_scenario* scenario, const char* placement);

/* Fully resolved configuration (every default filled in) as JSON.
 * The returned string lives until the next call on the same scenario. */
const char* dm_scenario_echo_json(dm_scenario* scenario);

/* Full pipeline: benign run, identification, attack synthesis, attacked run,
 * detection, metrics; writes CSV artifacts under the out dir. */
dm_status dm_run(dm_scenario* scenario, dm_report** out);

/* Repeats the pipeline across values of one parameter
 * (delta, n_id, noise_variance, amplitude, threshold). */
dm_status dm_sweep(dm_scenario* scenario, const char* parameter, const double* values,
                   size_t value_count, dm_report** out);

/* Invariant zeros of the plant and the cipher. */
dm_status dm_zeros(dm_scenario* scenario, dm_report** out);

/* Identification phase only. */
dm_status dm_identify(dm_scenario* scenario, dm_report** out);

const char* dm_report_json(const dm_report* report);
void dm_report_free(dm_report* report);

#ifdef __cplusplus
}
#endif

#endif /* DYNMASK_H */
