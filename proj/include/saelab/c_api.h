/* C interface to the saelab library. Every function returns a status code;
 * on failure a thread-local message is available from saelab_last_error(). */
#ifndef SAELAB_C_API_H
#define SAELAB_C_API_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SAELAB_API __declspec(dllexport)
#else
#define SAELAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum saelab_status {
  SAELAB_OK = 0,
  SAELAB_ERR_INVALID_ARGUMENT = 1,
  SAELAB_ERR_USAGE = 2,
  SAELAB_ERR_IO = 3,
  SAELAB_ERR_FORMAT = 4,
  SAELAB_ERR_CONSISTENCY = 5,
  SAELAB_ERR_DEGENERATE = 6,
  SAELAB_ERR_NUMERIC = 7,
  SAELAB_ERR_CONTRACT = 8,
  SAELAB_ERR_INTERNAL = 9
} saelab_status;

typedef struct saelab_config saelab_config;
typedef struct saelab_dataset saelab_dataset;
typedef struct saelab_model saelab_model;

SAELAB_API const char* saelab_version(void);
/* Message for the last failure on this thread; empty string if none. */
SAELAB_API const char* saelab_last_error(void);
SAELAB_API const char* saelab_status_name(saelab_status status);
/* Process exit code: 0 ok, 2 usage/config, 3 data, 4 numeric, 1 other. */
SAELAB_API int saelab_exit_code(saelab_status status);

/* ---- experiment configuration ---- */

/* preset: "desk", "paper" or NULL (desk). */
SAELAB_API saelab_status saelab_config_load(const char* path, const char* preset, saelab_config** out);
SAELAB_API saelab_status saelab_config_parse(const char* json_text, const char* preset, saelab_config** out);
/* Defaults for commands that need no recipe (eval, raster). */
SAELAB_API saelab_status saelab_config_default(saelab_config** out);
SAELAB_API void saelab_config_free(saelab_config* cfg);
SAELAB_API saelab_status saelab_config_set_seed(saelab_config* cfg, uint64_t seed);
SAELAB_API saelab_status saelab_config_set_threads(saelab_config* cfg, unsigned threads);
SAELAB_API saelab_status saelab_config_set_raster_extent(saelab_config* cfg, double extent);
SAELAB_API saelab_status saelab_config_set_raster_resolution(saelab_config* cfg, size_t resolution);
/* Non-zero: commands print summaries to stdout. */
SAELAB_API saelab_status saelab_config_set_verbose(saelab_config* cfg, int verbose);
/* Resolved recipe as JSON; release with saelab_string_free. */
SAELAB_API saelab_status saelab_config_to_json(const saelab_config* cfg, char** out);
SAELAB_API void saelab_string_free(char* s);

/* ---- commands ---- */

SAELAB_API saelab_status saelab_cmd_gen_data(const saelab_config* cfg, const char* out_dir);
/* data_dir may be NULL: <out_dir>/data is used. Returns SAELAB_ERR_NUMERIC
 * when any sweep point hit a non-finite value; the other points complete. */
SAELAB_API saelab_status saelab_cmd_train(const saelab_config* cfg, const char* out_dir, const char* data_dir);
SAELAB_API saelab_status saelab_cmd_eval(const saelab_config* cfg, const char* checkpoint, const char* data_dir,
                                         const char* out_dir);
SAELAB_API saelab_status saelab_cmd_raster(const saelab_config* cfg, const char* checkpoint, const char* data_dir,
                                           const char* out_dir);
SAELAB_API saelab_status saelab_cmd_report(const char* const* run_dirs, size_t count, const char* out_dir,
                                           int verbose);

/* ---- datasets ---- */

SAELAB_API saelab_status saelab_dataset_load(const char* dir, saelab_dataset** out);
SAELAB_API saelab_status saelab_dataset_save(const saelab_dataset* ds, const char* dir);
SAELAB_API void saelab_dataset_free(saelab_dataset* ds);
SAELAB_API size_t saelab_dataset_rows(const saelab_dataset* ds);
SAELAB_API size_t saelab_dataset_cols(const saelab_dataset* ds);
SAELAB_API size_t saelab_dataset_concepts(const saelab_dataset* ds);
/* Borrowed row-major samples and labels, valid until the dataset is freed. */
SAELAB_API const double* saelab_dataset_data(const saelab_dataset* ds);
SAELAB_API const uint32_t* saelab_dataset_labels(const saelab_dataset* ds);

/* ---- models ---- */

SAELAB_API saelab_status saelab_model_load(const char* dir, saelab_model** out);
SAELAB_API saelab_status saelab_model_save(const saelab_model* m, const char* dir);
SAELAB_API void saelab_model_free(saelab_model* m);
SAELAB_API size_t saelab_model_input_dim(const saelab_model* m);
SAELAB_API size_t saelab_model_latents(const saelab_model* m);
SAELAB_API const char* saelab_model_arch(const saelab_model* m);
/* x: n x d row-major; z_out: n x s; x_hat_out: n x d. */
SAELAB_API saelab_status saelab_model_encode(const saelab_model* m, const double* x, size_t n, double* z_out);
SAELAB_API saelab_status saelab_model_reconstruct(const saelab_model* m, const double* x, size_t n,
                                                  double* x_hat_out);

/* ---- kernels and files ---- */

/* Euclidean projection of v (length n) onto the probability simplex. */
SAELAB_API saelab_status saelab_sparsemax(const double* v, size_t n, double* z_out);
SAELAB_API saelab_status saelab_matrix_write(const char* path, const double* data, size_t rows, size_t cols);
/* *data is allocated by the library; release with saelab_buffer_free. */
SAELAB_API saelab_status saelab_matrix_read(const char* path, double** data, size_t* rows, size_t* cols);
SAELAB_API void saelab_buffer_free(double* data);

#ifdef __cplusplus
}
#endif

#endif /* SAELAB_C_API_H */
