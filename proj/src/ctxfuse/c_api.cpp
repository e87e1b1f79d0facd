// Copyright 2026 The ctxfuse Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ctxfuse/ctxfuse.h"

#include <algorithm>
#include <cstring>
#include <exception>
#include <limits>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "ctxfuse/core.hpp"
#include "ctxfuse/eval.hpp"
#include "ctxfuse/fusion.hpp"
#include "ctxfuse/io.hpp"
#include "ctxfuse/mlr.hpp"
#include "ctxfuse/pipeline.hpp"
#include "ctxfuse/synth.hpp"

struct ctxfuse_tensor {
  ctxfuse::io::Tensor tensor;
};

struct ctxfuse_head {
  ctxfuse::mlr::MlrHead head;
};

struct ctxfuse_report {
  ctxfuse::eval::EvalReport report;
  ctxfuse::CategoryVocabulary vocab;
};

struct ctxfuse_sweep_result {
  std::vector<ctxfuse::pipeline::SweepRow> rows;
};

namespace {

using namespace ctxfuse;

thread_local std::string g_last_error;

ctxfuse_status ToStatus(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return CTXFUSE_ERR_INVALID_ARGUMENT;
    case ErrorCode::kDegenerateVector: return CTXFUSE_ERR_DEGENERATE_VECTOR;
    case ErrorCode::kDimensionMismatch: return CTXFUSE_ERR_DIMENSION_MISMATCH;
    case ErrorCode::kTooFewCategories: return CTXFUSE_ERR_TOO_FEW_CATEGORIES;
    case ErrorCode::kInvalidLabel: return CTXFUSE_ERR_INVALID_LABEL;
    case ErrorCode::kNovelLabelInTraining: return CTXFUSE_ERR_NOVEL_LABEL_IN_TRAINING;
    case ErrorCode::kMissingTeacherEmbedding: return CTXFUSE_ERR_MISSING_TEACHER_EMBEDDING;
    case ErrorCode::kMissingHead: return CTXFUSE_ERR_MISSING_HEAD;
    case ErrorCode::kEmptyDataset: return CTXFUSE_ERR_EMPTY_DATASET;
    case ErrorCode::kEmptyFeatureMap: return CTXFUSE_ERR_EMPTY_FEATURE_MAP;
    case ErrorCode::kUnknownImage: return CTXFUSE_ERR_UNKNOWN_IMAGE;
    case ErrorCode::kBadMagic: return CTXFUSE_ERR_BAD_MAGIC;
    case ErrorCode::kBadVersion: return CTXFUSE_ERR_BAD_VERSION;
    case ErrorCode::kBadDtype: return CTXFUSE_ERR_BAD_DTYPE;
    case ErrorCode::kTruncatedPayload: return CTXFUSE_ERR_TRUNCATED_PAYLOAD;
    case ErrorCode::kDimOverflow: return CTXFUSE_ERR_DIM_OVERFLOW;
    case ErrorCode::kIo: return CTXFUSE_ERR_IO;
    case ErrorCode::kFormat: return CTXFUSE_ERR_FORMAT;
  }
  return CTXFUSE_ERR_INTERNAL;
}

ctxfuse_status SetError(ctxfuse_status status, const char* message) {
  g_last_error = message;
  return status;
}

// Runs fn, translating exceptions into status codes.
template <typename Fn>
ctxfuse_status Guard(Fn&& fn) noexcept {
  g_last_error.clear();
  try {
    fn();
    return CTXFUSE_OK;
  } catch (const Error& e) {
    return SetError(ToStatus(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return SetError(CTXFUSE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return SetError(CTXFUSE_ERR_INTERNAL, e.what());
  } catch (...) {
    return SetError(CTXFUSE_ERR_INTERNAL, "unknown exception");
  }
}

void Require(bool ok, const char* what) {
  if (!ok) Fail(ErrorCode::kInvalidArgument, what);
}

std::optional<std::filesystem::path> OptPath(const char* p) {
  if (p == nullptr || *p == '\0') return std::nullopt;
  return std::filesystem::path(p);
}

ctxfuse_status CopyText(const std::string& text, char* buf, std::size_t cap, std::size_t* required) {
  if (required != nullptr) *required = text.size() + 1;
  if (buf == nullptr || cap == 0) {
    return buf == nullptr && cap == 0 ? CTXFUSE_ERR_BUFFER_TOO_SMALL
                                      : SetError(CTXFUSE_ERR_INVALID_ARGUMENT, "null buffer with nonzero capacity");
  }
  const std::size_t n = std::min(cap - 1, text.size());
  std::memcpy(buf, text.data(), n);
  buf[n] = '\0';
  return n == text.size() ? CTXFUSE_OK : SetError(CTXFUSE_ERR_BUFFER_TOO_SMALL, "buffer too small");
}

FusionConfig FromC(const ctxfuse_fusion_config& c) {
  FusionConfig f;
  f.lambda_base = c.lambda_base;
  f.lambda_novel = c.lambda_novel;
  f.gamma = c.gamma;
  f.temperature = c.temperature;
  if (c.variant != CTXFUSE_VARIANT_MLR && c.variant != CTXFUSE_VARIANT_MLR_PLUS) {
    Fail(ErrorCode::kInvalidArgument, "unknown variant");
  }
  f.variant = c.variant == CTXFUSE_VARIANT_MLR ? Variant::kVisualMlr : Variant::kVisualMlrPlus;
  f.prob_floor = c.prob_floor;
  return f;
}

void ToC(const FusionConfig& f, ctxfuse_fusion_config* c) {
  c->lambda_base = f.lambda_base;
  c->lambda_novel = f.lambda_novel;
  c->gamma = f.gamma;
  c->temperature = f.temperature;
  c->variant = f.variant == Variant::kVisualMlr ? CTXFUSE_VARIANT_MLR : CTXFUSE_VARIANT_MLR_PLUS;
  c->prob_floor = f.prob_floor;
}

synth::WorldConfig FromC(const ctxfuse_world_config& c) {
  synth::WorldConfig w;
  w.n_categories = c.n_categories;
  w.n_base = c.n_base;
  w.n_themes = c.n_themes;
  w.embed_dim = c.embed_dim;
  w.global_dim = c.global_dim;
  w.images_train = c.images_train;
  w.images_test = c.images_test;
  w.objects_min = c.objects_min;
  w.objects_max = c.objects_max;
  w.hard_fraction = c.hard_fraction;
  w.regional_noise = c.regional_noise;
  w.hard_noise_multiplier = c.hard_noise_multiplier;
  w.global_noise = c.global_noise;
  w.temperature = c.temperature;
  w.top_k = c.top_k;
  w.image_width = c.image_width;
  w.image_height = c.image_height;
  w.seed = c.seed;
  return w;
}

void ToC(const synth::WorldConfig& w, ctxfuse_world_config* c) {
  c->n_categories = w.n_categories;
  c->n_base = w.n_base;
  c->n_themes = w.n_themes;
  c->embed_dim = w.embed_dim;
  c->global_dim = w.global_dim;
  c->images_train = w.images_train;
  c->images_test = w.images_test;
  c->objects_min = w.objects_min;
  c->objects_max = w.objects_max;
  c->hard_fraction = w.hard_fraction;
  c->regional_noise = w.regional_noise;
  c->hard_noise_multiplier = w.hard_noise_multiplier;
  c->global_noise = w.global_noise;
  c->temperature = w.temperature;
  c->top_k = w.top_k;
  c->image_width = w.image_width;
  c->image_height = w.image_height;
  c->seed = w.seed;
}

mlr::TrainConfig FromC(const ctxfuse_train_config& c) {
  mlr::TrainConfig t;
  t.learning_rate = c.learning_rate;
  t.beta1 = c.beta1;
  t.beta2 = c.beta2;
  t.epsilon = c.epsilon;
  t.weight_decay = c.weight_decay;
  t.batch_size = c.batch_size;
  t.iterations = c.iterations;
  t.seed = c.seed;
  if (c.loss_reduction != CTXFUSE_REDUCTION_SUM && c.loss_reduction != CTXFUSE_REDUCTION_MEAN_PAIRS) {
    Fail(ErrorCode::kInvalidArgument, "unknown loss reduction");
  }
  t.loss_reduction = c.loss_reduction == CTXFUSE_REDUCTION_SUM ? mlr::LossReduction::kSum
                                                               : mlr::LossReduction::kMeanPairs;
  return t;
}

void ToC(const mlr::TrainConfig& t, ctxfuse_train_config* c) {
  c->learning_rate = t.learning_rate;
  c->beta1 = t.beta1;
  c->beta2 = t.beta2;
  c->epsilon = t.epsilon;
  c->weight_decay = t.weight_decay;
  c->batch_size = t.batch_size;
  c->iterations = t.iterations;
  c->seed = t.seed;
  c->loss_reduction =
      t.loss_reduction == mlr::LossReduction::kSum ? CTXFUSE_REDUCTION_SUM : CTXFUSE_REDUCTION_MEAN_PAIRS;
}

pipeline::SweepParam FromC(ctxfuse_sweep_param p) {
  switch (p) {
    case CTXFUSE_SWEEP_GAMMA: return pipeline::SweepParam::kGamma;
    case CTXFUSE_SWEEP_LAMBDA_BASE: return pipeline::SweepParam::kLambdaBase;
    case CTXFUSE_SWEEP_LAMBDA_NOVEL: return pipeline::SweepParam::kLambdaNovel;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown sweep parameter");
}

ctxfuse_sweep_param ToC(pipeline::SweepParam p) {
  switch (p) {
    case pipeline::SweepParam::kGamma: return CTXFUSE_SWEEP_GAMMA;
    case pipeline::SweepParam::kLambdaBase: return CTXFUSE_SWEEP_LAMBDA_BASE;
    case pipeline::SweepParam::kLambdaNovel: return CTXFUSE_SWEEP_LAMBDA_NOVEL;
  }
  return CTXFUSE_SWEEP_GAMMA;
}

double Nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

extern "C" {

const char* ctxfuse_version(void) { return "1.0.0"; }

const char* ctxfuse_status_name(ctxfuse_status status) {
  switch (status) {
    case CTXFUSE_OK: return "Ok";
    case CTXFUSE_ERR_INVALID_ARGUMENT: return "InvalidArgument";
    case CTXFUSE_ERR_DEGENERATE_VECTOR: return "DegenerateVector";
    case CTXFUSE_ERR_DIMENSION_MISMATCH: return "DimensionMismatch";
    case CTXFUSE_ERR_TOO_FEW_CATEGORIES: return "TooFewCategories";
    case CTXFUSE_ERR_INVALID_LABEL: return "InvalidLabel";
    case CTXFUSE_ERR_NOVEL_LABEL_IN_TRAINING: return "NovelLabelInTraining";
    case CTXFUSE_ERR_MISSING_TEACHER_EMBEDDING: return "MissingTeacherEmbedding";
    case CTXFUSE_ERR_MISSING_HEAD: return "MissingHead";
    case CTXFUSE_ERR_EMPTY_DATASET: return "EmptyDataset";
    case CTXFUSE_ERR_EMPTY_FEATURE_MAP: return "EmptyFeatureMap";
    case CTXFUSE_ERR_UNKNOWN_IMAGE: return "UnknownImage";
    case CTXFUSE_ERR_BAD_MAGIC: return "BadMagic";
    case CTXFUSE_ERR_BAD_VERSION: return "BadVersion";
    case CTXFUSE_ERR_BAD_DTYPE: return "BadDtype";
    case CTXFUSE_ERR_TRUNCATED_PAYLOAD: return "TruncatedPayload";
    case CTXFUSE_ERR_DIM_OVERFLOW: return "DimOverflow";
    case CTXFUSE_ERR_IO: return "Io";
    case CTXFUSE_ERR_FORMAT: return "Format";
    case CTXFUSE_ERR_BUFFER_TOO_SMALL: return "BufferTooSmall";
    case CTXFUSE_ERR_INTERNAL: return "Internal";
  }
  return "Unknown";
}

const char* ctxfuse_last_error(void) { return g_last_error.c_str(); }

ctxfuse_status ctxfuse_fusion_config_preset(ctxfuse_preset preset, ctxfuse_fusion_config* out) {
  return Guard([&] {
    Require(out != nullptr, "out is null");
    switch (preset) {
      case CTXFUSE_PRESET_LVIS: ToC(fusion::PresetConfig(fusion::Preset::kLvis), out); return;
      case CTXFUSE_PRESET_COCO: ToC(fusion::PresetConfig(fusion::Preset::kCoco), out); return;
    }
    Fail(ErrorCode::kInvalidArgument, "unknown preset");
  });
}

void ctxfuse_world_config_default(ctxfuse_world_config* out) {
  if (out != nullptr) ToC(synth::WorldConfig{}, out);
}

ctxfuse_status ctxfuse_world_config_load(const char* path, ctxfuse_world_config* out) {
  return Guard([&] {
    Require(path != nullptr && out != nullptr, "null argument");
    ToC(io::ReadWorldConfig(path), out);
  });
}

void ctxfuse_train_config_default(ctxfuse_train_config* out) {
  if (out != nullptr) ToC(mlr::TrainConfig{}, out);
}

ctxfuse_status ctxfuse_train_config_load(const char* path, ctxfuse_train_config* out) {
  return Guard([&] {
    Require(path != nullptr && out != nullptr, "null argument");
    ToC(io::ReadTrainConfig(path), out);
  });
}

ctxfuse_status ctxfuse_cosine_similarity(const double* a, const double* b, size_t n, double* out) {
  return Guard([&] {
    Require(a != nullptr && b != nullptr && out != nullptr, "null argument");
    *out = CosineSimilarity({a, n}, {b, n});
  });
}

ctxfuse_status ctxfuse_zscore_normalize(const double* scores, size_t n, double* out) {
  return Guard([&] {
    Require(scores != nullptr && out != nullptr, "null argument");
    const std::vector<double> z = ZScoreNormalize({scores, n});
    std::copy(z.begin(), z.end(), out);
  });
}

ctxfuse_status ctxfuse_branch_probs(const double* raw, size_t n, double* out) {
  return Guard([&] {
    Require(raw != nullptr && out != nullptr, "null argument");
    const std::vector<double> p = fusion::BranchProbs({raw, n});
    std::copy(p.begin(), p.end(), out);
  });
}

ctxfuse_status ctxfuse_ensemble_mmlr(const double* p_text, const double* p_image, const uint8_t* is_novel, size_t n,
                                     const ctxfuse_fusion_config* cfg, double* out) {
  return Guard([&] {
    Require(p_text != nullptr && p_image != nullptr && is_novel != nullptr && cfg != nullptr && out != nullptr,
            "null argument");
    std::vector<Category> cats;
    bool any_base = false;
    for (size_t c = 0; c < n; ++c) {
      const bool novel = is_novel[c] != 0;
      any_base = any_base || !novel;
      cats.push_back({static_cast<int>(c), "c" + std::to_string(c), novel ? Split::kNovel : Split::kBase, {}});
    }
    // The vocabulary type demands a base category; a synthetic one is
    // harmless here because the ensemble is element-wise.
    if (!any_base) Fail(ErrorCode::kInvalidArgument, "need at least one base category");
    const CategoryVocabulary vocab(std::move(cats));
    const std::vector<double> p = fusion::EnsembleMmlr({p_text, n}, {p_image, n}, vocab, FromC(*cfg));
    std::copy(p.begin(), p.end(), out);
  });
}

ctxfuse_status ctxfuse_refine_score(double p_mmlr, double p_ovod, double gamma, double prob_floor, double* out) {
  return Guard([&] {
    Require(out != nullptr, "out is null");
    Require(gamma >= 0.0 && gamma <= 1.0, "gamma must be in [0,1]");
    Require(prob_floor > 0.0 && prob_floor < 1.0, "prob_floor must be in (0,1)");
    *out = fusion::WeightedGeometricMean(p_mmlr, p_ovod, gamma, prob_floor);
  });
}

ctxfuse_status ctxfuse_tensor_read(const char* path, ctxfuse_tensor** out) {
  return Guard([&] {
    Require(path != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    *out = new ctxfuse_tensor{io::ReadTensor(path)};
  });
}

ctxfuse_status ctxfuse_tensor_write(const char* path, const float* data, const uint64_t* dims, size_t ndim) {
  return Guard([&] {
    Require(path != nullptr && (dims != nullptr || ndim == 0), "null argument");
    io::Tensor t;
    t.dims.assign(dims, dims + ndim);
    std::size_t count = 1;
    for (uint64_t d : t.dims) count *= static_cast<std::size_t>(d);
    Require(data != nullptr || count == 0, "data is null");
    if (count > 0) t.values.assign(data, data + count);
    io::WriteTensor(path, t);
  });
}

size_t ctxfuse_tensor_ndim(const ctxfuse_tensor* t) { return t == nullptr ? 0 : t->tensor.dims.size(); }

uint64_t ctxfuse_tensor_dim(const ctxfuse_tensor* t, size_t axis) {
  if (t == nullptr || axis >= t->tensor.dims.size()) return 0;
  return t->tensor.dims[axis];
}

size_t ctxfuse_tensor_size(const ctxfuse_tensor* t) { return t == nullptr ? 0 : t->tensor.values.size(); }

const float* ctxfuse_tensor_data(const ctxfuse_tensor* t) {
  return t == nullptr ? nullptr : t->tensor.values.data();
}

void ctxfuse_tensor_free(ctxfuse_tensor* t) { delete t; }

ctxfuse_status ctxfuse_head_load(const char* dir, ctxfuse_head** out) {
  return Guard([&] {
    Require(dir != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    *out = new ctxfuse_head{io::ReadHead(dir)};
  });
}

size_t ctxfuse_head_input_dim(const ctxfuse_head* head) { return head == nullptr ? 0 : head->head.input_dim(); }

size_t ctxfuse_head_output_dim(const ctxfuse_head* head) { return head == nullptr ? 0 : head->head.output_dim(); }

ctxfuse_status ctxfuse_head_project(const ctxfuse_head* head, const double* x, size_t x_len, double* out,
                                    size_t out_len) {
  return Guard([&] {
    Require(head != nullptr && x != nullptr && out != nullptr, "null argument");
    if (out_len != head->head.output_dim()) Fail(ErrorCode::kDimensionMismatch, "output length mismatch");
    const EmbeddingVector e = mlr::Project(head->head, {x, x_len});
    std::copy(e.values.begin(), e.values.end(), out);
  });
}

void ctxfuse_head_free(ctxfuse_head* head) { delete head; }

ctxfuse_status ctxfuse_synth(const ctxfuse_world_config* cfg, const char* out_dir) {
  return Guard([&] {
    Require(cfg != nullptr && out_dir != nullptr, "null argument");
    pipeline::RunSynth(FromC(*cfg), out_dir);
  });
}

ctxfuse_status ctxfuse_train(const char* data_dir, ctxfuse_branch branch, const ctxfuse_train_config* cfg,
                             const char* out_dir, double* final_loss) {
  return Guard([&] {
    Require(data_dir != nullptr && cfg != nullptr && out_dir != nullptr, "null argument");
    Require(branch == CTXFUSE_BRANCH_TEXT || branch == CTXFUSE_BRANCH_IMAGE, "unknown branch");
    const mlr::TrainConfig tc = FromC(*cfg);
    tc.Validate();
    const pipeline::TrainSummary s = pipeline::RunTrain(
        data_dir, branch == CTXFUSE_BRANCH_TEXT ? io::Branch::kText : io::Branch::kImage, tc, out_dir);
    if (final_loss != nullptr) *final_loss = s.final_loss;
  });
}

ctxfuse_status ctxfuse_score(const char* data_dir, const char* split, const char* text_head_dir,
                             const char* image_head_dir, const ctxfuse_fusion_config* cfg, const char* out_dir) {
  return Guard([&] {
    Require(data_dir != nullptr && split != nullptr && text_head_dir != nullptr && cfg != nullptr &&
                out_dir != nullptr,
            "null argument");
    pipeline::RunScore(data_dir, split, text_head_dir, OptPath(image_head_dir), FromC(*cfg), out_dir);
  });
}

ctxfuse_status ctxfuse_scores_config(const char* scores_dir, ctxfuse_fusion_config* out) {
  return Guard([&] {
    Require(scores_dir != nullptr && out != nullptr, "null argument");
    ToC(io::ReadScoresConfig(scores_dir), out);
  });
}

ctxfuse_status ctxfuse_fuse(const char* data_dir, const char* split, const char* scores_dir,
                            const char* detections_path, const ctxfuse_fusion_config* cfg, const char* out_dir) {
  return Guard([&] {
    Require(data_dir != nullptr && split != nullptr && scores_dir != nullptr && cfg != nullptr && out_dir != nullptr,
            "null argument");
    pipeline::RunFuse(data_dir, split, scores_dir, OptPath(detections_path), FromC(*cfg), out_dir);
  });
}

ctxfuse_status ctxfuse_evaluate(const char* data_dir, const char* split, const char* detections_path,
                                const char* scores_dir, size_t k, ctxfuse_report** out) {
  return Guard([&] {
    Require(data_dir != nullptr && split != nullptr && out != nullptr, "null argument");
    Require(k > 0, "k must be positive");
    *out = nullptr;
    auto report = std::make_unique<ctxfuse_report>();
    report->report = pipeline::RunEval(data_dir, split, OptPath(detections_path), OptPath(scores_dir), k);
    report->vocab = io::ReadVocabulary(std::filesystem::path(data_dir) / "vocab.json");
    *out = report.release();
  });
}

ctxfuse_status ctxfuse_report_metric(const ctxfuse_report* report, const char* key, double* value, int* present) {
  return Guard([&] {
    Require(report != nullptr && key != nullptr && value != nullptr, "null argument");
    const eval::EvalReport& r = report->report;
    const std::string k = key;
    std::optional<double> v;
    if (k == "ap_all") v = r.ap_all;
    else if (k == "ap_novel") v = r.ap_novel;
    else if (k == "ap_base") v = r.ap_base;
    else if (k == "ap_rare") v = r.ap_rare;
    else if (k == "ap_common") v = r.ap_common;
    else if (k == "ap_frequent") v = r.ap_frequent;
    else if (k == "r_mlr_novel") v = r.r_mlr_novel;
    else if (k == "r_mlr_base") v = r.r_mlr_base;
    else if (k == "images") v = static_cast<double>(r.num_images);
    else if (k == "detections") v = static_cast<double>(r.num_detections);
    else if (k == "gt_objects") v = static_cast<double>(r.num_gt_objects);
    else Fail(ErrorCode::kInvalidArgument, "unknown metric '" + k + "'");
    *value = v.value_or(Nan());
    if (present != nullptr) *present = v.has_value() ? 1 : 0;
  });
}

ctxfuse_status ctxfuse_report_text(const ctxfuse_report* report, char* buf, size_t cap, size_t* required) {
  std::string text;
  const ctxfuse_status s = Guard([&] {
    Require(report != nullptr, "report is null");
    text = eval::FormatReport(report->report, report->vocab);
  });
  return s != CTXFUSE_OK ? s : CopyText(text, buf, cap, required);
}

ctxfuse_status ctxfuse_report_json(const ctxfuse_report* report, char* buf, size_t cap, size_t* required) {
  std::string text;
  const ctxfuse_status s = Guard([&] {
    Require(report != nullptr, "report is null");
    text = io::ReportToJson(report->report, report->vocab);
  });
  return s != CTXFUSE_OK ? s : CopyText(text, buf, cap, required);
}

ctxfuse_status ctxfuse_report_write(const ctxfuse_report* report, const char* out_dir) {
  return Guard([&] {
    Require(report != nullptr && out_dir != nullptr, "null argument");
    io::WriteReport(out_dir, report->report, report->vocab);
  });
}

void ctxfuse_report_free(ctxfuse_report* report) { delete report; }

ctxfuse_status ctxfuse_gradcheck(ctxfuse_loss_kind kind, uint64_t seed, double h, double* max_rel_error,
                                 double* kink_distance) {
  return Guard([&] {
    Require(max_rel_error != nullptr, "max_rel_error is null");
    Require(kind == CTXFUSE_LOSS_RANK || kind == CTXFUSE_LOSS_DIST, "unknown loss kind");
    Require(h > 0.0, "h must be positive");
    const pipeline::GradcheckResult r =
        pipeline::RunGradcheck(kind == CTXFUSE_LOSS_RANK ? mlr::LossKind::kRank : mlr::LossKind::kDist, seed, h);
    *max_rel_error = r.max_rel_error;
    if (kink_distance != nullptr) *kink_distance = r.kink_distance;
  });
}

ctxfuse_status ctxfuse_sweep(const char* data_dir, const char* split, const char* scores_dir,
                             const ctxfuse_fusion_config* base, const ctxfuse_sweep_param* params, size_t n_params,
                             ctxfuse_sweep_result** out) {
  return Guard([&] {
    Require(data_dir != nullptr && split != nullptr && scores_dir != nullptr && base != nullptr && out != nullptr,
            "null argument");
    Require(params != nullptr && n_params > 0, "no sweep parameters");
    *out = nullptr;
    const FusionConfig cfg = FromC(*base);
    auto result = std::make_unique<ctxfuse_sweep_result>();
    for (size_t i = 0; i < n_params; ++i) {
      const pipeline::SweepParam p = FromC(params[i]);
      const std::vector<double> values = pipeline::DefaultSweepValues(p);
      std::vector<pipeline::SweepRow> rows = pipeline::RunSweep(data_dir, split, scores_dir, cfg, p, values);
      for (auto& r : rows) result->rows.push_back(std::move(r));
    }
    *out = result.release();
  });
}

size_t ctxfuse_sweep_rows(const ctxfuse_sweep_result* result) { return result == nullptr ? 0 : result->rows.size(); }

ctxfuse_status ctxfuse_sweep_row(const ctxfuse_sweep_result* result, size_t row, ctxfuse_sweep_param* param,
                                 double* value, double* ap_all, double* ap_novel, double* ap_base) {
  return Guard([&] {
    Require(result != nullptr, "result is null");
    Require(row < result->rows.size(), "row out of range");
    const pipeline::SweepRow& r = result->rows[row];
    if (param != nullptr) *param = ToC(r.param);
    if (value != nullptr) *value = r.value;
    if (ap_all != nullptr) *ap_all = r.report.ap_all.value_or(Nan());
    if (ap_novel != nullptr) *ap_novel = r.report.ap_novel.value_or(Nan());
    if (ap_base != nullptr) *ap_base = r.report.ap_base.value_or(Nan());
  });
}

ctxfuse_status ctxfuse_sweep_text(const ctxfuse_sweep_result* result, char* buf, size_t cap, size_t* required) {
  std::string text;
  const ctxfuse_status s = Guard([&] {
    Require(result != nullptr, "result is null");
    text = pipeline::FormatSweep(result->rows);
  });
  return s != CTXFUSE_OK ? s : CopyText(text, buf, cap, required);
}

ctxfuse_status ctxfuse_sweep_write(const ctxfuse_sweep_result* result, const char* path) {
  return Guard([&] {
    Require(result != nullptr && path != nullptr, "null argument");
    io::WriteText(path, pipeline::FormatSweep(result->rows));
  });
}

void ctxfuse_sweep_free(ctxfuse_sweep_result* result) { delete result; }

ctxfuse_status ctxfuse_validate_dataset(const char* data_dir) {
  return Guard([&] {
    Require(data_dir != nullptr, "data_dir is null");
    io::ValidateDataset(data_dir);
  });
}

}  // extern "C"
