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

#include "ctxfuse/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace ctxfuse::fusion {

FusionConfig PresetConfig(Preset preset) {
  FusionConfig cfg;
  if (preset == Preset::kLvis) {
    cfg.lambda_base = 0.8;
    cfg.lambda_novel = 0.8;
    cfg.gamma = 0.5;
  } else {
    cfg.lambda_base = 0.8;
    cfg.lambda_novel = 0.5;
    cfg.gamma = 0.7;
  }
  return cfg;
}

Preset ParsePreset(const std::string& name) {
  if (name == "lvis") return Preset::kLvis;
  if (name == "coco") return Preset::kCoco;
  Fail(ErrorCode::kInvalidArgument, "unknown preset '" + name + "'");
}

double WeightedGeometricMean(double x, double y, double w, double floor) {
  const double cx = std::clamp(x, floor, 1.0);
  const double cy = std::clamp(y, floor, 1.0);
  if (w == 1.0) return cx;
  if (w == 0.0) return cy;
  return std::exp(w * std::log(cx) + (1.0 - w) * std::log(cy));
}

std::vector<double> BranchProbs(std::span<const double> raw_scores) {
  std::vector<double> out = ZScoreNormalize(raw_scores);
  for (double& v : out) v = StableSigmoid(v);
  return out;
}

std::vector<double> ImageBranchScores(const ImageRecord& record, const mlr::MlrHead* head, const Matrix& text_embeds,
                                      Variant variant) {
  if (variant == Variant::kVisualMlrPlus) {
    if (!record.teacher_embedding) {
      Fail(ErrorCode::kMissingTeacherEmbedding, "visual_mlr_plus needs a teacher embedding for " + record.image_id);
    }
    if (record.teacher_embedding->dim() != text_embeds.cols()) {
      Fail(ErrorCode::kDimensionMismatch, "teacher embedding dim differs from text embeddings");
    }
    std::vector<double> scores(text_embeds.rows());
    for (std::size_t c = 0; c < scores.size(); ++c) {
      scores[c] = CosineSimilarity(record.teacher_embedding->values, text_embeds.row(c));
    }
    return scores;
  }
  if (head == nullptr) Fail(ErrorCode::kMissingHead, "visual_mlr needs a trained image head");
  return mlr::BranchScores(*head, record.global_feature.values, text_embeds);
}

std::vector<double> EnsembleMmlr(std::span<const double> p_text, std::span<const double> p_image,
                                 const CategoryVocabulary& vocab, const FusionConfig& cfg) {
  cfg.Validate();
  if (p_text.size() != vocab.size() || p_image.size() != vocab.size()) {
    Fail(ErrorCode::kDimensionMismatch, "probability vectors must have one entry per category");
  }
  std::vector<double> out(vocab.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c] = vocab[c].split == Split::kBase
                 ? WeightedGeometricMean(p_text[c], p_image[c], cfg.lambda_base, cfg.prob_floor)
                 : WeightedGeometricMean(p_image[c], p_text[c], cfg.lambda_novel, cfg.prob_floor);
  }
  return out;
}

DetectionSet RefineDetections(const DetectionSet& dets, std::span<const double> p_mmlr, double gamma,
                              double prob_floor) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) Fail(ErrorCode::kInvalidArgument, "gamma must lie in [0,1]");
  DetectionSet out = dets;
  for (auto& inst : out.instances) {
    for (auto& sc : inst.scores) {
      if (sc.category_id < 0 || static_cast<std::size_t>(sc.category_id) >= p_mmlr.size()) {
        Fail(ErrorCode::kInvalidLabel, "detection category " + std::to_string(sc.category_id) + " in " +
                                           dets.image_id + " has no image-level score");
      }
      sc.probability = WeightedGeometricMean(p_mmlr[static_cast<std::size_t>(sc.category_id)], sc.probability, gamma,
                                             prob_floor);
    }
  }
  return out;
}

void RecomputeProbabilities(MlrScores& scores, const CategoryVocabulary& vocab, const FusionConfig& cfg) {
  scores.prob_text = BranchProbs(scores.raw_text);
  scores.prob_image = BranchProbs(scores.raw_image);
  scores.prob_mmlr = EnsembleMmlr(scores.prob_text, scores.prob_image, vocab, cfg);
}

MlrScores ScoreImage(const ImageRecord& record, const mlr::MlrHead& text_head, const mlr::MlrHead* image_head,
                     const Matrix& text_embeds, const CategoryVocabulary& vocab, const FusionConfig& cfg) {
  MlrScores scores;
  scores.image_id = record.image_id;
  scores.raw_text = mlr::BranchScores(text_head, record.global_feature.values, text_embeds);
  scores.raw_image = ImageBranchScores(record, image_head, text_embeds, cfg.variant);
  RecomputeProbabilities(scores, vocab, cfg);
  return scores;
}

}  // namespace ctxfuse::fusion
