#ifndef LDCQ_C_H
#define LDCQ_C_H

/* C interface to the latent-skill diffusion RL library. All functions return
 * LDCQ_OK (0) on success or a negative error code; ldcq_last_error() holds a
 * human-readable message for the most recent failure on this thread. */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#ifndef LDCQ_API
#define LDCQ_API
#endif

typedef struct ldcq_config ldcq_config; /* opaque */

enum {
  LDCQ_OK = 0,
  LDCQ_ERR_INVALID_ARG = -1,
  LDCQ_ERR_CONFIG = -2,
  LDCQ_ERR_IO = -3,
  LDCQ_ERR_MISSING_ARTIFACT = -4,
  LDCQ_ERR_DIVERGED = -5,
  LDCQ_ERR_INTERNAL = -6
};

LDCQ_API const char* ldcq_version(void);
LDCQ_API const char* ldcq_last_error(void);

/* Configs start from the desk-scale profile of the named environment
 * ("rw1d", "trimodal", "gridmaze"). */
LDCQ_API ldcq_config* ldcq_config_create(const char* env_name);
LDCQ_API ldcq_config* ldcq_config_load(const char* path);
LDCQ_API int ldcq_config_set(ldcq_config* cfg, const char* key, const char* value);
LDCQ_API int ldcq_config_get(const ldcq_config* cfg, const char* key, char* buf,
                             size_t buflen);
LDCQ_API int ldcq_config_save(const ldcq_config* cfg, const char* path);
LDCQ_API void ldcq_config_free(ldcq_config* cfg);

/* Pipeline stages; artifacts land under the config's `out` directory. */
LDCQ_API int ldcq_gen_data(const ldcq_config* cfg);
LDCQ_API int ldcq_train_vae(const ldcq_config* cfg);
LDCQ_API int ldcq_train_prior(const ldcq_config* cfg, int goal_conditioned);
LDCQ_API int ldcq_train_q(const ldcq_config* cfg);
LDCQ_API int ldcq_train_wm(const ldcq_config* cfg);
/* Writes eval/report-<mode>.json and .csv; mean return via out param when
 * mean_return_out is non-NULL. */
LDCQ_API int ldcq_eval(const ldcq_config* cfg, double* mean_return_out);
LDCQ_API int ldcq_analyze(const ldcq_config* cfg);
LDCQ_API int ldcq_run_pipeline(const ldcq_config* cfg);
/* horizons_csv: e.g. "1,5,20" */
LDCQ_API int ldcq_sweep(const ldcq_config* cfg, const char* horizons_csv,
                        const char* out_csv);
/* kind: "scatter" | "line" */
LDCQ_API int ldcq_plot(const char* csv_path, const char* kind, const char* out_svg);

#ifdef __cplusplus
}
#endif

#endif /* LDCQ_C_H */
