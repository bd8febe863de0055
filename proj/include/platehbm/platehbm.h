/* C interface to the plate deflection inference library. Every function
 * returns a phbm_status; on failure phbm_last_error() describes the cause for
 * the calling thread. Strings handed out by the library are released with
 * phbm_string_free. */
#ifndef PLATEHBM_H
#define PLATEHBM_H

#include <stddef.h>
#include <stdint.h>

#if defined(PHBM_BUILDING_LIBRARY)
#define PHBM_API __attribute__((visibility("default")))
#else
#define PHBM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum phbm_status {
  PHBM_OK = 0,
  PHBM_GATE_FAILED = 1, /* stage finished but some R-hat is at or above the threshold */
  PHBM_ERR_INVALID_ARGUMENT = 2,
  PHBM_ERR_DOMAIN = 3,
  PHBM_ERR_NUMERIC = 4,
  PHBM_ERR_IO = 5,
  PHBM_ERR_CONFIG = 6,
  PHBM_ERR_INTERNAL = 7
} phbm_status;

typedef enum phbm_model { PHBM_MODEL_HIER = 0, PHBM_MODEL_INDEP = 1 } phbm_model;

typedef struct phbm_config phbm_config;
typedef struct phbm_dataset phbm_dataset;
typedef struct phbm_gpr phbm_gpr;

PHBM_API const char* phbm_version(void);
/* Message of the last failing call on this thread ("" if none). */
PHBM_API const char* phbm_last_error(void);
PHBM_API void phbm_string_free(char* s);
/* Receives non-fatal warnings; NULL restores the stderr default. */
PHBM_API void phbm_set_warning_handler(void (*handler)(const char* message));

/* Configuration: defaults reproduce the reference setup. */
PHBM_API phbm_status phbm_config_create(phbm_config** out);
PHBM_API phbm_status phbm_config_load(const char* path, phbm_config** out);
/* Dotted key, e.g. "sampler.warmup", "general.seed", "general.output_dir". */
PHBM_API phbm_status phbm_config_set(phbm_config* cfg, const char* key, const char* value);
PHBM_API phbm_status phbm_config_to_ini(const phbm_config* cfg, char** out);
PHBM_API phbm_status phbm_config_hash(const phbm_config* cfg, char** out);
PHBM_API void phbm_config_free(phbm_config* cfg);

/* Pipeline stages; artifacts go to the configured output directory. */
PHBM_API phbm_status phbm_generate(const phbm_config* cfg);
PHBM_API phbm_status phbm_train_surrogate(const phbm_config* cfg);
/* plate = 0 runs every independent model; ignored for PHBM_MODEL_HIER. */
PHBM_API phbm_status phbm_infer(const phbm_config* cfg, phbm_model model, int plate);
/* focus_ratio (optional) receives the focus plate's variance-reduction ratio. */
PHBM_API phbm_status phbm_detect(const phbm_config* cfg, double* focus_ratio);
PHBM_API phbm_status phbm_report(const phbm_config* cfg, char** text);
PHBM_API phbm_status phbm_run_all(const phbm_config* cfg, char** report_text);

/* Synthetic datasets. Plates are 1-based. */
PHBM_API phbm_status phbm_dataset_generate(const phbm_config* cfg, uint64_t seed, phbm_dataset** out);
PHBM_API phbm_status phbm_dataset_load(const char* csv_path, phbm_dataset** out);
PHBM_API phbm_status phbm_dataset_num_plates(const phbm_dataset* ds, size_t* out);
PHBM_API phbm_status phbm_dataset_plate_size(const phbm_dataset* ds, int plate, size_t* out);
/* Copies up to `capacity` pairs; either output pointer may be NULL. */
PHBM_API phbm_status phbm_dataset_plate(const phbm_dataset* ds, int plate, double* amplitude,
                                        double* strain, size_t capacity);
PHBM_API void phbm_dataset_free(phbm_dataset* ds);

/* One-dimensional GP surrogate with a squared-exponential kernel. */
PHBM_API phbm_status phbm_gpr_fit(const double* x, const double* y, size_t n, double signal_var,
                                  double lengthscale, double noise_var, int optimize, uint64_t seed,
                                  phbm_gpr** out);
PHBM_API phbm_status phbm_gpr_predict(const phbm_gpr* gp, double x, double* mean, double* variance);
PHBM_API phbm_status phbm_gpr_mean_grad(const phbm_gpr* gp, double x, double* grad);
PHBM_API phbm_status phbm_gpr_kernel(const phbm_gpr* gp, double* signal_var, double* lengthscale,
                                     double* noise_var);
PHBM_API phbm_status phbm_gpr_log_marginal_likelihood(const phbm_gpr* gp, double* out);
PHBM_API void phbm_gpr_free(phbm_gpr* gp);

/* Diagnostics on chain-major draws: draws[c * n_draws + i]. */
PHBM_API phbm_status phbm_rhat(const double* draws, size_t n_chains, size_t n_draws, double* out);
PHBM_API phbm_status phbm_ess_bulk(const double* draws, size_t n_chains, size_t n_draws, double* out);
PHBM_API phbm_status phbm_ess_tail(const double* draws, size_t n_chains, size_t n_draws, double* out);

#ifdef __cplusplus
}
#endif

#endif /* PLATEHBM_H */
