/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the multi-decoder U-Net library.
 *
 * Every function returns an mdu_status. On failure a one-line description is
 * available from mdu_last_error() on the calling thread until the next call.
 * Objects are opaque handles released with their matching *_free function.
 * Strings and buffers returned through out-parameters are owned by the caller
 * and released with mdu_string_free / mdu_buffer_free.
 */
#ifndef MDUNET_H
#define MDUNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(MDUNET_BUILDING_LIBRARY)
#define MDU_API __attribute__((visibility("default")))
#else
#define MDU_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mdu_status {
  MDU_OK = 0,
  MDU_INVALID_ARGUMENT = 1,
  MDU_INVALID_CONFIG = 2,
  MDU_MISSING_DATA = 3,
  MDU_DIVERGENCE = 4,
  MDU_SHAPE_MISMATCH = 5,
  MDU_IO = 6,
  MDU_INTERNAL = 7
} mdu_status;

typedef struct mdu_config mdu_config;
typedef struct mdu_dataset mdu_dataset;
typedef struct mdu_model mdu_model;

MDU_API const char* mdu_last_error(void);
/* Stable snake_case name, e.g. "invalid_config". */
MDU_API const char* mdu_status_name(mdu_status status);
MDU_API void mdu_string_free(char* s);
MDU_API void mdu_buffer_free(float* buffer);

/* ---- run configuration ------------------------------------------------- */

MDU_API mdu_status mdu_config_default(mdu_config** out);
MDU_API mdu_status mdu_config_load(const char* path, mdu_config** out);
MDU_API mdu_status mdu_config_parse(const char* json_text, mdu_config** out);
/* key is dotted ("schedule.total_epochs"); value is JSON ("40", "[1,2]"). */
MDU_API mdu_status mdu_config_set(mdu_config* cfg, const char* key, const char* json_value);
MDU_API mdu_status mdu_config_get(const mdu_config* cfg, const char* key, char** json_value);
/* Fully resolved configuration as JSON. */
MDU_API mdu_status mdu_config_to_json(const mdu_config* cfg, char** json_text);
MDU_API void mdu_config_free(mdu_config* cfg);
/* Number of ensemble runs; 0 means a single plain run. */
MDU_API mdu_status mdu_config_ensemble_size(const mdu_config* cfg, size_t* n_runs);
/* Replaces the ensemble with n_runs default runs (alpha scaled by 1, 0.5, 2,
 * seed + run) unless it already has exactly n_runs. 0 or 1 clears it. */
MDU_API mdu_status mdu_config_set_ensemble(mdu_config* cfg, int n_runs);
/* Copy of cfg for one ensemble run: alpha, betas and seed taken from the run,
 * ensemble section cleared. */
MDU_API mdu_status mdu_config_for_run(const mdu_config* cfg, int run, mdu_config** out);

/* ---- datasets ---------------------------------------------------------- */

typedef struct mdu_case_info {
  const char* case_id; /* valid while the dataset lives */
  int channels;
  int height;
  int width;
  int n_raters;
  int is_ct;
  int has_crop;
  int crop_top;
  int crop_left;
  int crop_height;
  int crop_width;
} mdu_case_info;

/* Synthetic phantoms from the config's "synth" section. */
MDU_API mdu_status mdu_dataset_synth(const mdu_config* cfg, mdu_dataset** out);
MDU_API mdu_status mdu_dataset_load(const char* dir, mdu_dataset** out);
MDU_API mdu_status mdu_dataset_save(const mdu_dataset* ds, const char* dir);
/* Normalizes (z-score for MR, CT window rescale) and pads to the model grid. */
MDU_API mdu_status mdu_dataset_preprocess(const mdu_dataset* ds, const mdu_config* cfg,
                                          mdu_dataset** out);
MDU_API size_t mdu_dataset_size(const mdu_dataset* ds);
MDU_API mdu_status mdu_dataset_case_info(const mdu_dataset* ds, size_t index,
                                         mdu_case_info* info);
/* Averaged rater masks on the original (unpadded) grid; *out has h*w floats. */
MDU_API mdu_status mdu_dataset_ground_truth(const mdu_dataset* ds, size_t index, float** out,
                                            int* height, int* width);
MDU_API void mdu_dataset_free(mdu_dataset* ds);

/* ---- models ------------------------------------------------------------ */

MDU_API mdu_status mdu_model_create(const mdu_config* cfg, uint64_t seed, mdu_model** out);
MDU_API mdu_status mdu_model_load(const char* path, mdu_model** out);
MDU_API mdu_status mdu_model_save(const mdu_model* model, const char* path);
MDU_API mdu_status mdu_model_parameter_count(const mdu_model* model, uint64_t* count);
MDU_API mdu_status mdu_model_info(const mdu_model* model, int* n_decoders, int* n_classes,
                                  int* in_channels, int* grid_multiple);
/* probs receives n_decoders * n_classes * h * w floats, branch-major. */
MDU_API mdu_status mdu_model_forward(const mdu_model* model, const float* image, int channels,
                                     int height, int width, float* probs, size_t probs_len);
MDU_API void mdu_model_free(mdu_model* model);

/* ---- training ---------------------------------------------------------- */

typedef struct mdu_train_summary {
  int epochs;
  int best_epoch;
  double best_val_score;
  double final_total_loss;
} mdu_train_summary;

/* Called after every epoch with the training-log CSV row. */
typedef void (*mdu_epoch_callback)(const char* log_row, void* user);

/*
 * Trains with the config's schedule and loss weights. When out_dir is not
 * NULL it receives train_log.csv, loss_report.csv, config.json, model.ckpt
 * (best validation epoch) and last.ckpt. On return the model holds the
 * best-epoch weights.
 */
MDU_API mdu_status mdu_train(mdu_model* model, const mdu_dataset* ds, const mdu_config* cfg,
                             const char* out_dir, mdu_epoch_callback on_epoch, void* user,
                             mdu_train_summary* summary);

/* ---- prediction and evaluation ---------------------------------------- */

/* Mean over models of the branch-averaged foreground map, on the case's
 * original grid. *out holds h*w floats. */
MDU_API mdu_status mdu_predict_case(const mdu_model* const* models, size_t n_models,
                                    const mdu_dataset* ds, size_t index, float** out,
                                    int* height, int* width);
MDU_API mdu_status mdu_save_prediction(const char* dir, const char* case_id, const float* map,
                                       int height, int width);
MDU_API mdu_status mdu_load_prediction(const char* dir, const char* case_id, float** out,
                                       int* height, int* width);

/* Mean binary dice over thresholds {0.0, 0.1, ..., 0.9}. */
MDU_API mdu_status mdu_staple_score(const float* pred, const float* gt, int height, int width,
                                    double* score);
MDU_API mdu_status mdu_write_difference_png(const char* path, const float* pred, const float* gt,
                                            int height, int width, int scale);

#ifdef __cplusplus
}
#endif

#endif /* MDUNET_H */
