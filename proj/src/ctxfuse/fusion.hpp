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

#ifndef CTXFUSE_FUSION_HPP_
#define CTXFUSE_FUSION_HPP_

#include <span>
#include <string>
#include <vector>

#include "ctxfuse/core.hpp"
#include "ctxfuse/mlr.hpp"

namespace ctxfuse::fusion {

enum class Preset { kLvis, kCoco };

// lvis: lambda_base 0.8, lambda_novel 0.8, gamma 0.5.
// coco: lambda_base 0.8, lambda_novel 0.5, gamma 0.7.
FusionConfig PresetConfig(Preset preset);
Preset ParsePreset(const std::string& name);

// Weighted geometric mean x^w * y^(1-w), operands clamped to [floor, 1],
// evaluated in log space.
double WeightedGeometricMean(double x, double y, double w, double floor);

// sigmoid(zscore(raw)).
std::vector<double> BranchProbs(std::span<const double> raw_scores);

// visual_mlr: cos(project(head, e_global), t_c); visual_mlr_plus uses the
// teacher embedding directly.
std::vector<double> ImageBranchScores(const ImageRecord& record, const mlr::MlrHead* head, const Matrix& text_embeds,
                                      Variant variant);

// Split-dependent ensemble of the two branch probabilities.
std::vector<double> EnsembleMmlr(std::span<const double> p_text, std::span<const double> p_image,
                                 const CategoryVocabulary& vocab, const FusionConfig& cfg);

// Replaces every sparse detector score p with p_mmlr[c]^gamma * p^(1-gamma).
// Boxes and instance order are untouched.
DetectionSet RefineDetections(const DetectionSet& dets, std::span<const double> p_mmlr, double gamma,
                              double prob_floor = 1e-12);

MlrScores ScoreImage(const ImageRecord& record, const mlr::MlrHead& text_head, const mlr::MlrHead* image_head,
                     const Matrix& text_embeds, const CategoryVocabulary& vocab, const FusionConfig& cfg);

// Recomputes probabilities and the ensemble from stored raw scores.
void RecomputeProbabilities(MlrScores& scores, const CategoryVocabulary& vocab, const FusionConfig& cfg);

}  // namespace ctxfuse::fusion

#endif  // CTXFUSE_FUSION_HPP_
