/* SPDX-License-Identifier: Apache-2.0
 * Copyright 2026 The fskate Authors
 *
 * C interface to the fskate skating-score regressors. Every function
 * returns an fsk_status; on failure fsk_last_error() holds a one-line
 * diagnostic for the calling thread. Handles are opaque and owned by the
 * caller once returned.
 */

#ifndef FSKATE_FSKATE_H
#define FSKATE_FSKATE_H

#include <stddef.h>

#if defined(FSKATE_BUILDING_LIBRARY)
#define FSK_API __attribute__((visibility("default")))
#else
#define FSK_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fsk_status {
  FSK_OK = 0,
  FSK_ERR_INVALID_ARGUMENT = 1,
  FSK_ERR_IO = 2,
  FSK_ERR_FORMAT = 3,
  FSK_ERR_MANIFEST = 4,
  FSK_ERR_CHECKPOINT = 5,
  FSK_ERR_CHECKPOINT_VERSION = 6,
  FSK_ERR_KIND_MISMATCH = 7,
  FSK_ERR_NONFINITE_LOSS = 8,
  FSK_ERR_UNDEFINED_CORRELATION = 9,
  FSK_ERR_DIMENSION = 10,
  FSK_ERR_SEQUENCE_TOO_SHORT = 11,
  FSK_ERR_INTERNAL = 12
} fsk_status;

typedef struct fsk_options fsk_options;
typedef struct fsk_dataset fsk_dataset;
typedef struct fsk_model fsk_model;
typedef struct fsk_analysis fsk_analysis;

FSK_API const char* fsk_version(void);
FSK_API const char* fsk_status_name(fsk_status status);
/* Diagnostic of the last failed call on this thread ("" if none). */
FSK_API const char* fsk_last_error(void);

/* ------------------------------------------------------------ options
 * String key/value settings shared by synth, train and load. Unknown keys
 * and unparsable values are rejected by fsk_options_set.
 *
 * model:  model (slstm|mlstm|fused), att_hidden, att_rows, slstm_hidden,
 *         branches ("k:stride:cell,..."), conv_channels, mlstm_hidden,
 *         head_hidden ("256" or "128,64" or "" for a linear head),
 *         gate_mode (literal|swapped), precision (float|double)
 * train:  target (tes|pcs), lr, batch_size, epochs, dropout,
 *         penalty_weight, seed, val_fraction, standardize_targets (0|1),
 *         freeze_trunks (0|1), init_slstm, init_mlstm (checkpoint paths
 *         whose trunk weights seed a fused model)
 * synth:  n_videos, n_train, t_min, t_max, dim, events_min, events_max,
 *         event_len_min, event_len_max, event_types, difficulty_min,
 *         difficulty_max, event_gain, tes_base, pcs_base, pcs_amplitude,
 *         trend_amplitude, quality_sharpness, background_amplitude, noise,
 *         n_matches, seed
 */
FSK_API fsk_status fsk_options_new(fsk_options** out);
FSK_API void fsk_options_free(fsk_options* opts);
FSK_API fsk_status fsk_options_set(fsk_options* opts, const char* key, const char* value);
/* Range checks on the model, training and synth settings (the input width
 * is checked later against the dataset). */
FSK_API fsk_status fsk_options_validate(const fsk_options* opts);

/* ------------------------------------------------------------ synthetic */

/* Writes features/<id>.fsfv, manifest.csv, events.json and scores.csv. */
FSK_API fsk_status fsk_synth(const fsk_options* opts, const char* out_dir);

/* ------------------------------------------------------------ dataset */

FSK_API fsk_status fsk_dataset_load(const char* manifest_path, fsk_dataset** out);
FSK_API void fsk_dataset_free(fsk_dataset* data);
FSK_API size_t fsk_dataset_size(const fsk_dataset* data);
FSK_API size_t fsk_dataset_dim(const fsk_dataset* data);

/* ------------------------------------------------------------ training */

typedef void (*fsk_progress_fn)(void* user, size_t epoch, double train_loss, double train_mse, double penalty,
                                double val_mse);

/* Trains on the dataset's train split and returns the best-validation
 * model. `progress` may be NULL. */
FSK_API fsk_status fsk_train(const fsk_dataset* data, const fsk_options* opts, fsk_progress_fn progress, void* user,
                             fsk_model** out);

/* Per-epoch trace CSV (epoch,train_loss,train_mse,penalty,val_mse). Models
 * loaded from disk have an empty trace. */
FSK_API fsk_status fsk_model_write_trace(const fsk_model* model, const char* path);
/* JSON echo of the model and training configuration. */
FSK_API fsk_status fsk_model_write_run_config(const fsk_model* model, const char* path);

/* ------------------------------------------------------------ models */

/* `expected_kind` (slstm|mlstm|fused) may be NULL; `precision` (float|double)
 * may be NULL for float. */
FSK_API fsk_status fsk_model_load(const char* path, const char* expected_kind, const char* precision,
                                  fsk_model** out);
FSK_API fsk_status fsk_model_save(const fsk_model* model, const char* path);
FSK_API void fsk_model_free(fsk_model* model);
/* Static strings / strings owned by the model. */
FSK_API const char* fsk_model_kind(const fsk_model* model);
FSK_API const char* fsk_model_target(const fsk_model* model);
FSK_API size_t fsk_model_input_dim(const fsk_model* model);

/* Eval-mode score of one FSFV feature file. For attention-bearing models a
 * non-NULL `attention_csv` receives the d2 x T attention matrix. */
FSK_API fsk_status fsk_predict_file(const fsk_model* model, const char* features_path, double* score,
                                    const char* attention_csv);

typedef struct fsk_report {
  size_t n;
  double mse;
  double spearman;
  double kendall;
  int correlation_defined; /* 0 when either side has zero rank variance */
  char correlation_error[256];
} fsk_report;

/* Evaluates one split ("train"|"test") against a target ("tes"|"pcs").
 * `predictions_csv` may be NULL; otherwise receives id,target,prediction. */
FSK_API fsk_status fsk_evaluate(const fsk_model* model, const fsk_dataset* data, const char* split, const char* target,
                                size_t workers, fsk_report* report, const char* predictions_csv);

/* ------------------------------------------------------------ analysis */

/* Per-group TES-vs-PCS correlations over a match,player,tes,pcs table.
 * `group_by` is "match" or "player". */
FSK_API fsk_status fsk_analyze(const char* scores_csv, const char* group_by, fsk_analysis** out);
FSK_API void fsk_analysis_free(fsk_analysis* analysis);
FSK_API size_t fsk_analysis_group_count(const fsk_analysis* analysis);
FSK_API fsk_status fsk_analysis_group(const fsk_analysis* analysis, size_t index, const char** name, double* rho,
                                      double* tau, size_t* n);
FSK_API size_t fsk_analysis_skipped_count(const fsk_analysis* analysis);
FSK_API fsk_status fsk_analysis_skipped(const fsk_analysis* analysis, size_t index, const char** name, size_t* n,
                                        const char** reason);
/* group,rho,tau,n */
FSK_API fsk_status fsk_analysis_write_csv(const fsk_analysis* analysis, const char* path);

#ifdef __cplusplus
}
#endif

#endif /* FSKATE_FSKATE_H */
