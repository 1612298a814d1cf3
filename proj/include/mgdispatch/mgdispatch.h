#ifndef MGDISPATCH_H
#define MGDISPATCH_H

/* C interface to the microgrid dispatch library.
 *
 * Every call returns an mgd_status. On failure, mgd_last_error() gives a
 * message for the calling thread that stays valid until its next call.
 * Strings returned through char** are owned by the caller and released
 * with mgd_string_free. Handles are released with their *_free function;
 * passing NULL to a free function is a no-op. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MGD_API __declspec(dllexport)
#else
#define MGD_API __attribute__((visibility("default")))
#endif

typedef enum mgd_status {
  MGD_OK = 0,
  MGD_ERR_ARGUMENT = 1, /* NULL handle, bad index, malformed value */
  MGD_ERR_CONFIG = 2,   /* invalid or unknown configuration */
  MGD_ERR_IO = 3,       /* file missing, unreadable or malformed */
  MGD_ERR_DATA = 4,     /* exogenous data problem */
  MGD_ERR_DIVERGED = 5, /* training produced non-finite values */
  MGD_ERR_INTERNAL = 6
} mgd_status;

typedef struct mgd_config mgd_config;
typedef struct mgd_result mgd_result;
typedef struct mgd_policy mgd_policy;

MGD_API const char* mgd_version(void);
MGD_API const char* mgd_last_error(void);
MGD_API const char* mgd_status_name(mgd_status s);
MGD_API void mgd_string_free(char* s);

/* Configuration ---------------------------------------------------------- */

MGD_API mgd_status mgd_config_default(mgd_config** out);
MGD_API mgd_status mgd_config_load(const char* path, mgd_config** out);
MGD_API mgd_status mgd_config_parse(const char* json_text, mgd_config** out);
MGD_API void mgd_config_free(mgd_config* cfg);

/* Overrides. Values are parsed on the spot; cross-field consistency (for
 * example case versus algorithms) is checked by mgd_config_validate and by
 * every call that consumes the configuration.
 *   "case"        I | II | III | IV
 *   "algorithms"  comma-separated names, e.g. "fh-ddpg,myopic"
 *   "seeds"       comma-separated integers
 *   "output"      artifact directory ("" disables writing)
 *   "episodes"    evaluation episode count
 *   "checkpoints" "true" | "false" */
MGD_API mgd_status mgd_config_set(mgd_config* cfg, const char* key, const char* value);
MGD_API mgd_status mgd_config_validate(const mgd_config* cfg);
MGD_API mgd_status mgd_config_to_json(const mgd_config* cfg, char** out);
MGD_API mgd_status mgd_config_hash(const mgd_config* cfg, char** out);

/* Experiments ------------------------------------------------------------ */

/* Trains the learners, evaluates every configured algorithm and, if an
 * output directory is set, writes the report and artifacts there. */
MGD_API mgd_status mgd_run(const mgd_config* cfg, mgd_result** out);
MGD_API void mgd_result_free(mgd_result* r);
MGD_API mgd_status mgd_result_report_json(const mgd_result* r, char** out);
MGD_API mgd_status mgd_result_policy_count(const mgd_result* r, size_t* out);
/* Returns an independent copy of the i-th trained policy. */
MGD_API mgd_status mgd_result_policy(const mgd_result* r, size_t i, mgd_policy** out);

/* k2/k1 sweep with k1 fixed; writes a JSON document with one report per ratio. */
MGD_API mgd_status mgd_sweep(const mgd_config* cfg, const double* ratios, size_t n, char** out_json);

/* Policies --------------------------------------------------------------- */

MGD_API mgd_status mgd_policy_load(const char* dir, mgd_policy** out);
MGD_API mgd_status mgd_policy_save(const mgd_policy* p, const char* dir);
MGD_API void mgd_policy_free(mgd_policy* p);
MGD_API mgd_status mgd_policy_algorithm(const mgd_policy* p, char** out);
MGD_API mgd_status mgd_policy_seed(const mgd_policy* p, uint64_t* out);
/* Number of trained actors (time-indexed bundles: one per learned step). */
MGD_API mgd_status mgd_policy_actor_count(const mgd_policy* p, size_t* out);

/* Evaluates a policy on the configured test day; writes a JSON object with
 * return, c_dg and c_us averaged over the evaluation episodes. */
MGD_API mgd_status mgd_policy_evaluate(const mgd_config* cfg, const mgd_policy* p, char** out_json);
/* Writes a per-step CSV trace from the given initial SoC (kWh). */
MGD_API mgd_status mgd_policy_trace(const mgd_config* cfg, const mgd_policy* p, double soc0, const char* csv_path);
/* Same, for a deterministic baseline named like "ilqg" or "myopic". */
MGD_API mgd_status mgd_baseline_trace(const mgd_config* cfg, const char* algorithm, double soc0,
                                      const char* csv_path);
/* Critic estimates against realized return-to-go; writes a CSV and the
 * Pearson correlation (NaN when undefined). */
MGD_API mgd_status mgd_policy_calibrate(const mgd_config* cfg, const mgd_policy* p, const char* csv_path,
                                        double* correlation);

/* Data ------------------------------------------------------------------- */

/* Synthetic hourly load/PV series starting 2024-01-01, as CSV. */
MGD_API mgd_status mgd_synth_data(uint64_t seed, int days, const char* csv_path);

#ifdef __cplusplus
}
#endif

#endif
