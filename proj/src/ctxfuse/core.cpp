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

#include "ctxfuse/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ctxfuse {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDegenerateVector: return "DegenerateVector";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kTooFewCategories: return "TooFewCategories";
    case ErrorCode::kInvalidLabel: return "InvalidLabel";
    case ErrorCode::kNovelLabelInTraining: return "NovelLabelInTraining";
    case ErrorCode::kMissingTeacherEmbedding: return "MissingTeacherEmbedding";
    case ErrorCode::kMissingHead: return "MissingHead";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kEmptyFeatureMap: return "EmptyFeatureMap";
    case ErrorCode::kUnknownImage: return "UnknownImage";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kBadVersion: return "BadVersion";
    case ErrorCode::kBadDtype: return "BadDtype";
    case ErrorCode::kTruncatedPayload: return "TruncatedPayload";
    case ErrorCode::kDimOverflow: return "DimOverflow";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kFormat: return "Format";
  }
  return "Unknown";
}

void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, std::string(ErrorCodeName(code)) + ": " + message);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    Fail(ErrorCode::kDimensionMismatch, "matrix data length does not match shape");
  }
}

const char* SplitName(Split split) { return split == Split::kBase ? "base" : "novel"; }

Split ParseSplit(const std::string& name) {
  if (name == "base") return Split::kBase;
  if (name == "novel") return Split::kNovel;
  Fail(ErrorCode::kFormat, "unknown split '" + name + "'");
}

const char* GroupName(FrequencyGroup group) {
  switch (group) {
    case FrequencyGroup::kRare: return "rare";
    case FrequencyGroup::kCommon: return "common";
    case FrequencyGroup::kFrequent: return "frequent";
  }
  return "";
}

FrequencyGroup ParseGroup(const std::string& name) {
  if (name == "rare") return FrequencyGroup::kRare;
  if (name == "common") return FrequencyGroup::kCommon;
  if (name == "frequent") return FrequencyGroup::kFrequent;
  Fail(ErrorCode::kFormat, "unknown frequency group '" + name + "'");
}

const char* VariantName(Variant variant) {
  return variant == Variant::kVisualMlr ? "mlr" : "mlr-plus";
}

Variant ParseVariant(const std::string& name) {
  if (name == "mlr" || name == "visual_mlr") return Variant::kVisualMlr;
  if (name == "mlr-plus" || name == "visual_mlr_plus") return Variant::kVisualMlrPlus;
  Fail(ErrorCode::kInvalidArgument, "unknown variant '" + name + "'");
}

CategoryVocabulary::CategoryVocabulary(std::vector<Category> categories)
    : categories_(std::move(categories)) {
  ValidateVocabulary(*this);
}

std::vector<int> CategoryVocabulary::ids_in(Split split) const {
  std::vector<int> ids;
  for (const auto& c : categories_) {
    if (c.split == split) ids.push_back(c.id);
  }
  return ids;
}

void ValidateVocabulary(const CategoryVocabulary& vocab) {
  std::set<std::string> names;
  bool any_base = false;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const Category& c = vocab[i];
    if (c.id != static_cast<int>(i)) {
      Fail(ErrorCode::kFormat, "category ids must be contiguous 0..C-1 (got " +
                                   std::to_string(c.id) + " at position " + std::to_string(i) + ")");
    }
    if (c.name.empty()) Fail(ErrorCode::kFormat, "empty category name");
    if (!names.insert(c.name).second) Fail(ErrorCode::kFormat, "duplicate category name '" + c.name + "'");
    any_base = any_base || c.split == Split::kBase;
  }
  if (!any_base) Fail(ErrorCode::kFormat, "vocabulary needs at least one base category");
}

bool IsValidBox(const Box& b) {
  for (double v : b) {
    if (!std::isfinite(v)) return false;
  }
  return b[0] < b[2] && b[1] < b[3];
}

void ValidateDetections(const DetectionSet& dets, const CategoryVocabulary& vocab) {
  for (const auto& inst : dets.instances) {
    if (!IsValidBox(inst.box)) Fail(ErrorCode::kFormat, "invalid box in detections of " + dets.image_id);
    for (const auto& sc : inst.scores) {
      if (!vocab.is_valid_id(sc.category_id)) {
        Fail(ErrorCode::kInvalidLabel, "category id " + std::to_string(sc.category_id) + " in detections of " +
                                           dets.image_id);
      }
      if (!(sc.probability >= 0.0 && sc.probability <= 1.0)) {
        Fail(ErrorCode::kFormat, "detection probability outside [0,1] in " + dets.image_id);
      }
    }
  }
}

void ValidateGroundTruth(const GroundTruthSet& gts, const CategoryVocabulary& vocab) {
  for (const auto& obj : gts.objects) {
    if (!IsValidBox(obj.box)) Fail(ErrorCode::kFormat, "invalid box in ground truth of " + gts.image_id);
    if (!vocab.is_valid_id(obj.category_id)) {
      Fail(ErrorCode::kInvalidLabel, "category id " + std::to_string(obj.category_id) + " in ground truth of " +
                                         gts.image_id);
    }
  }
}

void ValidateRecord(const ImageRecord& record, const CategoryVocabulary& vocab) {
  for (int label : record.labels) {
    if (!vocab.is_valid_id(label)) {
      Fail(ErrorCode::kInvalidLabel, "label " + std::to_string(label) + " in " + record.image_id);
    }
  }
  for (double v : record.global_feature.values) {
    if (!std::isfinite(v)) Fail(ErrorCode::kFormat, "non-finite global feature in " + record.image_id);
  }
}

void FusionConfig::Validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(lambda_base) || !in_unit(lambda_novel) || !in_unit(gamma)) {
    Fail(ErrorCode::kInvalidArgument, "lambda_base, lambda_novel and gamma must lie in [0,1]");
  }
  if (!(temperature > 0.0)) Fail(ErrorCode::kInvalidArgument, "temperature must be positive");
  if (!(prob_floor > 0.0 && prob_floor < 1.0)) Fail(ErrorCode::kInvalidArgument, "prob_floor must lie in (0,1)");
}

double Dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) Fail(ErrorCode::kDimensionMismatch, "dot product of unequal dimensions");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double Norm(std::span<const double> v) { return std::sqrt(Dot(v, v)); }

EmbeddingVector L2Normalize(std::span<const double> v) {
  const double n = Norm(v);
  if (!std::isfinite(n)) Fail(ErrorCode::kInvalidArgument, "non-finite vector");
  if (n == 0.0) Fail(ErrorCode::kDegenerateVector, "cannot normalize a zero vector");
  EmbeddingVector out;
  out.values.reserve(v.size());
  for (double x : v) out.values.push_back(x / n);
  out.unit = true;
  return out;
}

double CosineSimilarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) Fail(ErrorCode::kDimensionMismatch, "cosine of unequal dimensions");
  const double na = Norm(a);
  const double nb = Norm(b);
  if (na == 0.0 || nb == 0.0) Fail(ErrorCode::kDegenerateVector, "cosine with a zero-norm operand");
  return std::clamp(Dot(a, b) / (na * nb), -1.0, 1.0);
}

std::vector<double> ZScoreNormalize(std::span<const double> s) {
  if (s.size() < 2) Fail(ErrorCode::kTooFewCategories, "normalization needs at least two categories");
  const double n = static_cast<double>(s.size());
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  var /= n;
  const double sd = std::sqrt(var);
  std::vector<double> out(s.size(), 0.0);
  // A spread at rounding level carries no ranking signal.
  if (sd == 0.0 || sd <= 1e-15 * std::max(1.0, std::abs(mean))) return out;
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = (s[i] - mean) / sd;
  return out;
}

double StableSigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> RegionSoftmax(std::span<const double> region_embed, const Matrix& text_embeds,
                                  double temperature) {
  if (!(temperature > 0.0)) Fail(ErrorCode::kInvalidArgument, "temperature must be positive");
  if (text_embeds.cols() != region_embed.size()) {
    Fail(ErrorCode::kDimensionMismatch, "region embedding and text embeddings disagree in dimension");
  }
  std::vector<double> logits(text_embeds.rows());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    logits[c] = CosineSimilarity(region_embed, text_embeds.row(c)) / temperature;
  }
  if (logits.empty()) return logits;
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - max_logit);
    total += l;
  }
  for (double& l : logits) l /= total;
  return logits;
}

}  // namespace ctxfuse
