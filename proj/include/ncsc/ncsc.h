/* C interface to the ncsc clustering library.
 *
 * Every function returning ncsc_status reports failure through the code and
 * leaves a message retrievable with ncsc_last_error() on the calling thread.
 * Handles are opaque; each *_new / *_load / *_synthetic result is released
 * with the matching *_free. */
#ifndef NCSC_NCSC_H
#define NCSC_NCSC_H

#include <stddef.h>
#include <stdint.h>

#if defined(NCSC_BUILDING_LIBRARY)
#define NCSC_API __attribute__((visibility("default")))
#else
#define NCSC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ncsc_status {
  NCSC_OK = 0,
  NCSC_VALIDATION_ERROR = 1, /* bad input, config or file contents */
  NCSC_RUNTIME_ERROR = 2     /* I/O failure, divergence, internal error */
} ncsc_status;

typedef struct ncsc_dataset ncsc_dataset;
typedef struct ncsc_config ncsc_config;
typedef struct ncsc_trainer ncsc_trainer;

typedef struct ncsc_metrics {
  double acc;
  double nmi;
  double ari;
} ncsc_metrics;

/* Receives one text line (no trailing newline). */
typedef void (*ncsc_line_fn)(const char* line, void* user);

NCSC_API const char* ncsc_last_error(void);
NCSC_API const char* ncsc_version(void);

/* Datasets */
NCSC_API ncsc_status ncsc_dataset_synthetic(size_t k, size_t d, size_t ambient_dim, size_t n_per, double noise_sigma,
                                            const char* nonlinearity, const char* scaling, uint64_t seed,
                                            ncsc_dataset** out);
/* Features from CSV or IDX images (detected by magic); labels path may be NULL. */
NCSC_API ncsc_status ncsc_dataset_load(const char* features_path, const char* labels_path, ncsc_dataset** out);
NCSC_API ncsc_status ncsc_dataset_subset(const ncsc_dataset* data, size_t n, int balanced, uint64_t seed,
                                         ncsc_dataset** out);
/* labels_path may be NULL. */
NCSC_API ncsc_status ncsc_dataset_write_csv(const ncsc_dataset* data, const char* features_path,
                                            const char* labels_path);
NCSC_API ncsc_status ncsc_dataset_write_idx(const ncsc_dataset* data, const char* images_path,
                                            const char* labels_path);
NCSC_API size_t ncsc_dataset_size(const ncsc_dataset* data);
NCSC_API size_t ncsc_dataset_feature_count(const ncsc_dataset* data);
NCSC_API int ncsc_dataset_has_labels(const ncsc_dataset* data);
/* Copies ground-truth labels for evaluation; `capacity` must be >= size. */
NCSC_API ncsc_status ncsc_dataset_labels(const ncsc_dataset* data, size_t* out, size_t capacity);
NCSC_API const char* ncsc_dataset_provenance(const ncsc_dataset* data);
NCSC_API void ncsc_dataset_free(ncsc_dataset* data);

/* Raw-pixel k-means++ baseline (restarts >= 1); writes size labels. */
NCSC_API ncsc_status ncsc_kmeans_labels(const ncsc_dataset* data, size_t k, size_t restarts, uint64_t seed,
                                        size_t* out, size_t capacity);

/* Experiment configuration */
NCSC_API ncsc_status ncsc_config_new(ncsc_config** out);
NCSC_API ncsc_status ncsc_config_load(const char* path, ncsc_config** out);
NCSC_API ncsc_status ncsc_config_set(ncsc_config* cfg, const char* key, const char* value);
NCSC_API ncsc_status ncsc_config_validate(const ncsc_config* cfg);
/* Writes the canonical key=value text; *needed receives the length including the terminator. */
NCSC_API ncsc_status ncsc_config_to_text(const ncsc_config* cfg, char* buffer, size_t capacity, size_t* needed);
NCSC_API void ncsc_config_free(ncsc_config* cfg);

/* Training */
NCSC_API ncsc_status ncsc_trainer_new(const ncsc_config* cfg, const ncsc_dataset* shape_source, ncsc_trainer** out);
NCSC_API ncsc_status ncsc_trainer_load(ncsc_trainer* trainer, const char* checkpoint_path);
NCSC_API ncsc_status ncsc_trainer_save(const ncsc_trainer* trainer, const char* checkpoint_path);
/* Either output pointer may be NULL. */
NCSC_API ncsc_status ncsc_trainer_pretrain(ncsc_trainer* trainer, const ncsc_dataset* data, double* initial_mse,
                                           double* final_mse);
/* step_log receives training-log CSV rows (see ncsc_training_log_header), epoch_log
 * receives "epoch,<metrics row>" after each evaluation. Either callback may be NULL. */
NCSC_API ncsc_status ncsc_trainer_fit(ncsc_trainer* trainer, const ncsc_dataset* data, ncsc_line_fn step_log,
                                      ncsc_line_fn epoch_log, void* user);
NCSC_API ncsc_status ncsc_trainer_predict(ncsc_trainer* trainer, const ncsc_dataset* data, size_t* labels,
                                          size_t capacity);
/* Writes <prefix>_As.csv, <prefix>_As.pgm, <prefix>_Ac.csv and <prefix>_Ac.pgm for one batch. */
NCSC_API ncsc_status ncsc_trainer_export_affinity(ncsc_trainer* trainer, const ncsc_dataset* data, size_t batch,
                                                  const char* prefix);
NCSC_API size_t ncsc_trainer_batch_count(ncsc_trainer* trainer, const ncsc_dataset* data);
NCSC_API void ncsc_trainer_free(ncsc_trainer* trainer);

NCSC_API const char* ncsc_training_log_header(void);
NCSC_API const char* ncsc_metrics_header(void);

/* Metrics */
NCSC_API ncsc_status ncsc_evaluate(const size_t* y_true, const size_t* y_pred, size_t n, ncsc_metrics* out);
/* Formats the metrics CSV row (n,k,acc,nmi,ari,cluster sizes). */
NCSC_API ncsc_status ncsc_metrics_row(const size_t* y_true, const size_t* y_pred, size_t n, size_t k, char* buffer,
                                      size_t capacity, size_t* needed);

/* Runs the operator gradient suite plus the network check; line_log receives
 * "name,instances,max_error" per entry. */
NCSC_API ncsc_status ncsc_gradcheck(uint64_t seed, size_t instances, double* max_error, ncsc_line_fn line_log,
                                    void* user);

#ifdef __cplusplus
}
#endif

#endif
