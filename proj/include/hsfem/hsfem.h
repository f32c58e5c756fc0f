/* C interface to the heterogeneous stochastic FEM library.
 *
 * All objects are opaque handles. Functions return an hsfem_status; on any
 * non-OK status, hsfem_last_error() describes the failure for the calling
 * thread. Strings returned through char** are owned by the caller and must be
 * released with hsfem_string_free.
 */
#ifndef HSFEM_H
#define HSFEM_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define HSFEM_API __declspec(dllexport)
#else
#define HSFEM_API __attribute__((visibility("default")))
#endif

typedef enum hsfem_status {
  HSFEM_OK = 0,
  HSFEM_ERR_INVALID_ARGUMENT = 1,
  HSFEM_ERR_CONFIG = 2,
  HSFEM_ERR_NUMERICAL = 3,
  HSFEM_ERR_MODEL = 4,
  HSFEM_ERR_MISMATCH = 5,
  HSFEM_ERR_IO = 6,
  HSFEM_ERR_INTERNAL = 7
} hsfem_status;

typedef struct hsfem_config hsfem_config;
typedef struct hsfem_artifact hsfem_artifact;
typedef struct hsfem_solution hsfem_solution;

HSFEM_API const char* hsfem_version(void);
HSFEM_API const char* hsfem_last_error(void);
HSFEM_API const char* hsfem_status_name(hsfem_status status);
HSFEM_API void hsfem_string_free(char* s);

/* Log messages go to stderr. 0 off, 1 errors, 2 warnings, 3 info, 4 debug. */
HSFEM_API hsfem_status hsfem_set_log_level(int level);

/* 0 uses every hardware thread. */
HSFEM_API hsfem_status hsfem_set_threads(int threads);

/* Configurations. */
HSFEM_API hsfem_status hsfem_config_from_file(const char* path, hsfem_config** out);
HSFEM_API hsfem_status hsfem_config_from_json(const char* json, hsfem_config** out);
HSFEM_API hsfem_status hsfem_config_from_preset(const char* name, int desk, hsfem_config** out);
HSFEM_API hsfem_status hsfem_config_set_output(hsfem_config* cfg, const char* directory);
HSFEM_API hsfem_status hsfem_config_set_threads(hsfem_config* cfg, int threads);
HSFEM_API hsfem_status hsfem_config_to_json(const hsfem_config* cfg, char** json);
HSFEM_API hsfem_status hsfem_config_artifact_path(const hsfem_config* cfg, char** path);
HSFEM_API void hsfem_config_free(hsfem_config* cfg);

HSFEM_API hsfem_status hsfem_preset_list(char** json);

/* Stage drivers. Each writes its files into the config's output directory
 * and returns the summary it wrote as JSON (pass NULL to discard it).
 * A NULL artifact path means the config's default artifact location. */
HSFEM_API hsfem_status hsfem_run_offline(const hsfem_config* cfg, char** summary);
HSFEM_API hsfem_status hsfem_run_online(const hsfem_config* cfg, const char* artifact_path, char** summary);
/* k_match < 0 takes the average basis size from the artifact. */
HSFEM_API hsfem_status hsfem_run_baseline_kl(const hsfem_config* cfg, const char* artifact_path, double k_match,
                                             char** summary);
HSFEM_API hsfem_status hsfem_run_tmatrix(const hsfem_config* cfg, char** summary);
HSFEM_API hsfem_status hsfem_run_correct(const hsfem_config* cfg, const char* artifact_path, char** summary);

/* Offline artifacts in memory. */
HSFEM_API hsfem_status hsfem_artifact_build(const hsfem_config* cfg, hsfem_artifact** out);
HSFEM_API hsfem_status hsfem_artifact_save(const hsfem_artifact* art, const char* path);
HSFEM_API hsfem_status hsfem_artifact_load(const char* path, hsfem_artifact** out);
HSFEM_API hsfem_status hsfem_artifact_summary(const hsfem_artifact* art, char** json);
HSFEM_API void hsfem_artifact_free(hsfem_artifact* art);

/* Online solves. The forcing is a JSON object such as
 * {"kind":"constant","value":1}. */
HSFEM_API hsfem_status hsfem_online_solve(const hsfem_artifact* art, const char* forcing_json, hsfem_solution** out);
/* Number of interior nodes, i.e. the length of the statistics arrays. */
HSFEM_API size_t hsfem_solution_size(const hsfem_solution* sol);
/* mean and sd must each hold hsfem_solution_size() doubles; either may be NULL. */
HSFEM_API hsfem_status hsfem_solution_statistics(const hsfem_solution* sol, double* mean, double* sd);
HSFEM_API void hsfem_solution_free(hsfem_solution* sol);

#ifdef __cplusplus
}
#endif

#endif
