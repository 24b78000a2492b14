#ifndef PESCAL_H
#define PESCAL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define PESCAL_API __declspec(dllexport)
#else
#define PESCAL_API __attribute__((visibility("default")))
#endif

typedef enum pescal_status {
  PESCAL_OK = 0,
  PESCAL_INVALID_ARGUMENT = 1,
  PESCAL_CONFIG_ERROR = 2,
  PESCAL_IO_ERROR = 3,
  PESCAL_RUNTIME_ERROR = 4
} pescal_status;

typedef struct pescal_spec pescal_spec;
typedef struct pescal_dataset pescal_dataset;

/* Message of the last failure on the calling thread; empty after success. */
PESCAL_API const char* pescal_last_error(void);

/* Frees strings returned through `char**` out-parameters. */
PESCAL_API void pescal_string_free(char* s);

/* Library version string, static storage. */
PESCAL_API const char* pescal_version(void);

/* Spec handles. NULL or "{}" JSON gives the default synthetic model. */
PESCAL_API pescal_status pescal_spec_create(const char* spec_json, pescal_spec** out);
PESCAL_API void pescal_spec_free(pescal_spec* spec);
PESCAL_API pescal_status pescal_spec_to_json(const pescal_spec* spec, char** out_json);
PESCAL_API pescal_status pescal_spec_fingerprint(const pescal_spec* spec, uint64_t* out);

/* Behavior-mode offline data of n_trajectories * horizon tuples. */
PESCAL_API pescal_status pescal_dataset_generate(const pescal_spec* spec, int confounded,
                                                 size_t n_trajectories, size_t horizon,
                                                 uint64_t seed, pescal_dataset** out);
PESCAL_API pescal_status pescal_dataset_read_csv(const pescal_spec* spec, const char* path,
                                                 pescal_dataset** out);
PESCAL_API void pescal_dataset_free(pescal_dataset* d);
PESCAL_API pescal_status pescal_dataset_size(const pescal_dataset* d, size_t* out);
PESCAL_API pescal_status pescal_dataset_write_csv(const pescal_dataset* d, const char* path);
/* Keeps the first keep_k tuples, then drops the actions 0 and 1. */
PESCAL_API pescal_status pescal_dataset_coverage_filter(const pescal_dataset* d, size_t keep_k,
                                                        pescal_dataset** out);

/* Exact oracle report (JSON) for the model at discount gamma. */
PESCAL_API pescal_status pescal_oracle_report(const pescal_spec* spec, double gamma,
                                              char** out_json);

/*
 * Runs a subcommand ("gen-data", "train", "evaluate", "oracle", "figure6").
 * options_json may hold "out", "seeds", "preset", "jobs", "log_level" and
 * "base_dir" (for resolving relative paths in the config). On success
 * *out_json receives a JSON summary to be released with pescal_string_free.
 */
PESCAL_API pescal_status pescal_run_command(const char* command, const char* config_json,
                                            const char* options_json, char** out_json);

#ifdef __cplusplus
}
#endif

#endif
