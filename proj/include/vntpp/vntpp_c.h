/* C interface to the vntpp shared library: opaque handles, integer status
 * codes, JSON strings for structured data. Strings returned through char**
 * out-parameters are owned by the library; release them with
 * vntpp_string_free. On any non-zero status, vntpp_last_error() describes
 * the failure (thread-local). */

#ifndef VNTPP_C_H
#define VNTPP_C_H

#ifdef __cplusplus
extern "C" {
#endif

#define VNTPP_C_API_VERSION 1

typedef enum vntpp_status {
  VNTPP_OK = 0,
  VNTPP_ERR_INVALID_ARG = 1,
  VNTPP_ERR_PARSE = 2,
  VNTPP_ERR_VALIDATION = 3,
  VNTPP_ERR_IO = 4,
  VNTPP_ERR_NUMERIC = 5,
  VNTPP_ERR_INTERNAL = 6
} vntpp_status;

typedef struct vntpp_dataset vntpp_dataset;
typedef struct vntpp_hawkes_spec vntpp_hawkes_spec;
typedef struct vntpp_model vntpp_model;

const char* vntpp_version(void);
int vntpp_c_api_version(void);
const char* vntpp_last_error(void);
void vntpp_string_free(char* s);

/* Caps internal worker threads (0 = hardware default). */
vntpp_status vntpp_set_threads(int n);

/* ---- Hawkes specs and simulation ---- */
vntpp_status vntpp_hawkes_spec_load(const char* path, vntpp_hawkes_spec** out);
vntpp_status vntpp_hawkes_spec_parse(const char* json_text, vntpp_hawkes_spec** out);
vntpp_status vntpp_hawkes_spec_to_json(const vntpp_hawkes_spec* spec, char** json_out);
void vntpp_hawkes_spec_free(vntpp_hawkes_spec* spec);

vntpp_status vntpp_simulate_dataset(const vntpp_hawkes_spec* spec, long n_sequences,
                                    double horizon, unsigned long long seed,
                                    vntpp_dataset** out);

/* ---- datasets ---- */
vntpp_status vntpp_dataset_load(const char* path, vntpp_dataset** out);
vntpp_status vntpp_dataset_save(const vntpp_dataset* d, const char* path);
vntpp_status vntpp_dataset_info(const vntpp_dataset* d, long* n_sequences, int* num_types,
                                double* mean_length);
vntpp_status vntpp_dataset_split(const vntpp_dataset* d, double train_frac, double val_frac,
                                 double test_frac, unsigned long long seed,
                                 vntpp_dataset** train_out, vntpp_dataset** val_out,
                                 vntpp_dataset** test_out);
void vntpp_dataset_free(vntpp_dataset* d);

/* ---- pipeline commands (JSON in, JSON out; artifacts under out_dir) ---- */
vntpp_status vntpp_generate(const char* spec_path, long n_sequences, double horizon,
                            unsigned long long seed, const char* out_dir, char** summary_json);
vntpp_status vntpp_train(const char* config_json, const char* out_dir, const char* resume_path,
                         char** summary_json);
vntpp_status vntpp_evaluate(const char* checkpoint_path, const char* dataset_path,
                            const char* truth_spec_path, const char* out_dir, int n_points,
                            const char* scheme, char** metrics_json);
vntpp_status vntpp_predict(const char* checkpoint_path, const char* dataset_path,
                           const char* out_dir, int n_points, const char* scheme,
                           char** summary_json);
vntpp_status vntpp_analyze(const char* checkpoint_path, const char* dataset_path,
                           const char* mode, const char* truth_spec_path, const char* out_dir,
                           int seq_index, char** summary_json);

/* ---- direct model access ---- */
vntpp_status vntpp_model_load(const char* checkpoint_path, vntpp_model** out);
void vntpp_model_free(vntpp_model* m);
vntpp_status vntpp_model_kind(const vntpp_model* m, char** kind_out);
/* Next-event prediction from an explicit history (arrays of length n). */
vntpp_status vntpp_model_predict_next(const vntpp_model* m, const int* types,
                                      const double* times, long n, int n_points,
                                      const char* scheme, char** prediction_json);

#ifdef __cplusplus
}
#endif

#endif /* VNTPP_C_H */
