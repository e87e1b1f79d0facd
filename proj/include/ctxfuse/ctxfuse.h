/* Copyright 2026 The ctxfuse Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to ctxfuse: image-level multi-label scoring and context-aware
 * refinement of open-vocabulary detector scores.
 *
 * Conventions:
 *  - Every fallible call returns a ctxfuse_status. On failure a message is
 *    available from ctxfuse_last_error() on the calling thread until the
 *    next ctxfuse call on that thread.
 *  - Objects are opaque handles created by *_load / *_create style calls and
 *    released with the matching *_free. Freeing NULL is a no-op.
 *  - Text getters follow the snprintf protocol: `required` receives the
 *    buffer size including the terminator; a short buffer yields
 *    CTXFUSE_ERR_BUFFER_TOO_SMALL with a truncated, terminated copy.
 *  - Optional path arguments accept NULL.
 */

#ifndef CTXFUSE_CTXFUSE_H_
#define CTXFUSE_CTXFUSE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(CTXFUSE_BUILDING_LIBRARY)
#define CTXFUSE_API __declspec(dllexport)
#else
#define CTXFUSE_API __declspec(dllimport)
#endif
#else
#define CTXFUSE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ctxfuse_status {
  CTXFUSE_OK = 0,
  CTXFUSE_ERR_INVALID_ARGUMENT = 1,
  CTXFUSE_ERR_DEGENERATE_VECTOR = 2,
  CTXFUSE_ERR_DIMENSION_MISMATCH = 3,
  CTXFUSE_ERR_TOO_FEW_CATEGORIES = 4,
  CTXFUSE_ERR_INVALID_LABEL = 5,
  CTXFUSE_ERR_NOVEL_LABEL_IN_TRAINING = 6,
  CTXFUSE_ERR_MISSING_TEACHER_EMBEDDING = 7,
  CTXFUSE_ERR_MISSING_HEAD = 8,
  CTXFUSE_ERR_EMPTY_DATASET = 9,
  CTXFUSE_ERR_EMPTY_FEATURE_MAP = 10,
  CTXFUSE_ERR_UNKNOWN_IMAGE = 11,
  CTXFUSE_ERR_BAD_MAGIC = 12,
  CTXFUSE_ERR_BAD_VERSION = 13,
  CTXFUSE_ERR_BAD_DTYPE = 14,
  CTXFUSE_ERR_TRUNCATED_PAYLOAD = 15,
  CTXFUSE_ERR_DIM_OVERFLOW = 16,
  CTXFUSE_ERR_IO = 17,
  CTXFUSE_ERR_FORMAT = 18,
  CTXFUSE_ERR_BUFFER_TOO_SMALL = 19,
  CTXFUSE_ERR_INTERNAL = 99
} ctxfuse_status;

CTXFUSE_API const char* ctxfuse_version(void);
CTXFUSE_API const char* ctxfuse_status_name(ctxfuse_status status);
CTXFUSE_API const char* ctxfuse_last_error(void);

/* ---- configuration ------------------------------------------------------ */

typedef enum ctxfuse_variant {
  CTXFUSE_VARIANT_MLR = 0,      /* learned image head */
  CTXFUSE_VARIANT_MLR_PLUS = 1  /* teacher embedding used directly */
} ctxfuse_variant;

typedef enum ctxfuse_preset { CTXFUSE_PRESET_LVIS = 0, CTXFUSE_PRESET_COCO = 1 } ctxfuse_preset;

typedef struct ctxfuse_fusion_config {
  double lambda_base;
  double lambda_novel;
  double gamma;
  double temperature;
  ctxfuse_variant variant;
  double prob_floor;
} ctxfuse_fusion_config;

CTXFUSE_API ctxfuse_status ctxfuse_fusion_config_preset(ctxfuse_preset preset, ctxfuse_fusion_config* out);

typedef struct ctxfuse_world_config {
  uint64_t n_categories;
  uint64_t n_base;
  uint64_t n_themes;
  uint64_t embed_dim;
  uint64_t global_dim;
  uint64_t images_train;
  uint64_t images_test;
  uint64_t objects_min;
  uint64_t objects_max;
  double hard_fraction;
  double regional_noise;
  double hard_noise_multiplier;
  double global_noise;
  double temperature;
  uint64_t top_k;
  double image_width;
  double image_height;
  uint64_t seed;
} ctxfuse_world_config;

CTXFUSE_API void ctxfuse_world_config_default(ctxfuse_world_config* out);
/* Keys absent from the JSON file keep their defaults. */
CTXFUSE_API ctxfuse_status ctxfuse_world_config_load(const char* path, ctxfuse_world_config* out);

typedef enum ctxfuse_reduction { CTXFUSE_REDUCTION_SUM = 0, CTXFUSE_REDUCTION_MEAN_PAIRS = 1 } ctxfuse_reduction;

typedef struct ctxfuse_train_config {
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
  double weight_decay;
  uint64_t batch_size;
  uint64_t iterations;
  uint64_t seed;
  ctxfuse_reduction loss_reduction;
} ctxfuse_train_config;

CTXFUSE_API void ctxfuse_train_config_default(ctxfuse_train_config* out);
CTXFUSE_API ctxfuse_status ctxfuse_train_config_load(const char* path, ctxfuse_train_config* out);

/* ---- scoring primitives ------------------------------------------------- */

CTXFUSE_API ctxfuse_status ctxfuse_cosine_similarity(const double* a, const double* b, size_t n, double* out);
/* (s - mean) / population stddev; constant input gives zeros. n >= 2. */
CTXFUSE_API ctxfuse_status ctxfuse_zscore_normalize(const double* scores, size_t n, double* out);
/* sigmoid(zscore(raw)). */
CTXFUSE_API ctxfuse_status ctxfuse_branch_probs(const double* raw, size_t n, double* out);
/* is_novel[c] != 0 marks novel categories. */
CTXFUSE_API ctxfuse_status ctxfuse_ensemble_mmlr(const double* p_text, const double* p_image, const uint8_t* is_novel,
                                                 size_t n, const ctxfuse_fusion_config* cfg, double* out);
/* p_mmlr^gamma * p_ovod^(1-gamma), operands clamped to [prob_floor, 1]. */
CTXFUSE_API ctxfuse_status ctxfuse_refine_score(double p_mmlr, double p_ovod, double gamma, double prob_floor,
                                                double* out);

/* ---- tensor files ------------------------------------------------------- */

typedef struct ctxfuse_tensor ctxfuse_tensor;

CTXFUSE_API ctxfuse_status ctxfuse_tensor_read(const char* path, ctxfuse_tensor** out);
CTXFUSE_API ctxfuse_status ctxfuse_tensor_write(const char* path, const float* data, const uint64_t* dims,
                                                size_t ndim);
CTXFUSE_API size_t ctxfuse_tensor_ndim(const ctxfuse_tensor* t);
CTXFUSE_API uint64_t ctxfuse_tensor_dim(const ctxfuse_tensor* t, size_t axis);
CTXFUSE_API size_t ctxfuse_tensor_size(const ctxfuse_tensor* t);
CTXFUSE_API const float* ctxfuse_tensor_data(const ctxfuse_tensor* t);
CTXFUSE_API void ctxfuse_tensor_free(ctxfuse_tensor* t);

/* ---- trained heads ------------------------------------------------------ */

typedef struct ctxfuse_head ctxfuse_head;

CTXFUSE_API ctxfuse_status ctxfuse_head_load(const char* dir, ctxfuse_head** out);
CTXFUSE_API size_t ctxfuse_head_input_dim(const ctxfuse_head* head);
CTXFUSE_API size_t ctxfuse_head_output_dim(const ctxfuse_head* head);
CTXFUSE_API ctxfuse_status ctxfuse_head_project(const ctxfuse_head* head, const double* x, size_t x_len, double* out,
                                                size_t out_len);
CTXFUSE_API void ctxfuse_head_free(ctxfuse_head* head);

/* ---- pipeline ----------------------------------------------------------- */

typedef enum ctxfuse_branch { CTXFUSE_BRANCH_TEXT = 0, CTXFUSE_BRANCH_IMAGE = 1 } ctxfuse_branch;

/* Writes a synthetic dataset root (vocab, text embeddings, train/ and test/). */
CTXFUSE_API ctxfuse_status ctxfuse_synth(const ctxfuse_world_config* cfg, const char* out_dir);

/* Trains one head on <data_dir>/train and writes it to out_dir. */
CTXFUSE_API ctxfuse_status ctxfuse_train(const char* data_dir, ctxfuse_branch branch, const ctxfuse_train_config* cfg,
                                         const char* out_dir, double* final_loss);

/* Scores every image of a split; image_head_dir is required for the MLR
 * variant and ignored otherwise. */
CTXFUSE_API ctxfuse_status ctxfuse_score(const char* data_dir, const char* split, const char* text_head_dir,
                                         const char* image_head_dir, const ctxfuse_fusion_config* cfg,
                                         const char* out_dir);

/* Fusion settings a scores directory was written with; temperature is set
 * to its default. */
CTXFUSE_API ctxfuse_status ctxfuse_scores_config(const char* scores_dir, ctxfuse_fusion_config* out);

/* Writes out_dir/detections.jsonl with refined scores. detections_path
 * defaults to <data_dir>/<split>/detections.jsonl. prob_mmlr is re-derived
 * from the stored raw scores when cfg's lambdas or floor differ from
 * ctxfuse_scores_config(); the variant must match. */
CTXFUSE_API ctxfuse_status ctxfuse_fuse(const char* data_dir, const char* split, const char* scores_dir,
                                        const char* detections_path, const ctxfuse_fusion_config* cfg,
                                        const char* out_dir);

typedef struct ctxfuse_report ctxfuse_report;

CTXFUSE_API ctxfuse_status ctxfuse_evaluate(const char* data_dir, const char* split, const char* detections_path,
                                            const char* scores_dir, size_t k, ctxfuse_report** out);
/* Keys: ap_all, ap_novel, ap_base, ap_rare, ap_common, ap_frequent,
 * r_mlr_novel, r_mlr_base, images, detections, gt_objects. */
CTXFUSE_API ctxfuse_status ctxfuse_report_metric(const ctxfuse_report* report, const char* key, double* value,
                                                 int* present);
CTXFUSE_API ctxfuse_status ctxfuse_report_text(const ctxfuse_report* report, char* buf, size_t cap,
                                               size_t* required);
CTXFUSE_API ctxfuse_status ctxfuse_report_json(const ctxfuse_report* report, char* buf, size_t cap,
                                               size_t* required);
/* report.txt and report.json under out_dir. */
CTXFUSE_API ctxfuse_status ctxfuse_report_write(const ctxfuse_report* report, const char* out_dir);
CTXFUSE_API void ctxfuse_report_free(ctxfuse_report* report);

typedef enum ctxfuse_loss_kind { CTXFUSE_LOSS_RANK = 0, CTXFUSE_LOSS_DIST = 1 } ctxfuse_loss_kind;

/* Finite-difference check on a seeded random instance (D=16, d=8, C=10,
 * batch 4). kink_distance may be NULL. */
CTXFUSE_API ctxfuse_status ctxfuse_gradcheck(ctxfuse_loss_kind kind, uint64_t seed, double h, double* max_rel_error,
                                             double* kink_distance);

typedef enum ctxfuse_sweep_param {
  CTXFUSE_SWEEP_GAMMA = 0,
  CTXFUSE_SWEEP_LAMBDA_BASE = 1,
  CTXFUSE_SWEEP_LAMBDA_NOVEL = 2
} ctxfuse_sweep_param;

typedef struct ctxfuse_sweep_result ctxfuse_sweep_result;

/* One-at-a-time grids: gamma over 0.3..0.9, lambdas over 0.5..1.0, step 0.1.
 * Each listed parameter is varied with the others held at `base`. */
CTXFUSE_API ctxfuse_status ctxfuse_sweep(const char* data_dir, const char* split, const char* scores_dir,
                                         const ctxfuse_fusion_config* base, const ctxfuse_sweep_param* params,
                                         size_t n_params, ctxfuse_sweep_result** out);
CTXFUSE_API size_t ctxfuse_sweep_rows(const ctxfuse_sweep_result* result);
CTXFUSE_API ctxfuse_status ctxfuse_sweep_row(const ctxfuse_sweep_result* result, size_t row,
                                             ctxfuse_sweep_param* param, double* value, double* ap_all,
                                             double* ap_novel, double* ap_base);
CTXFUSE_API ctxfuse_status ctxfuse_sweep_text(const ctxfuse_sweep_result* result, char* buf, size_t cap,
                                              size_t* required);
CTXFUSE_API ctxfuse_status ctxfuse_sweep_write(const ctxfuse_sweep_result* result, const char* path);
CTXFUSE_API void ctxfuse_sweep_free(ctxfuse_sweep_result* result);

/* Validates every file of a dataset root against the formats above. */
CTXFUSE_API ctxfuse_status ctxfuse_validate_dataset(const char* data_dir);

#ifdef __cplusplus
}
#endif

#endif /* CTXFUSE_CTXFUSE_H_ */
