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

#ifndef CTXFUSE_EVAL_HPP_
#define CTXFUSE_EVAL_HPP_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctxfuse/core.hpp"

namespace ctxfuse::eval {

inline constexpr double kDefaultIouThreshold = 0.5;

// Intersection over union; zero-area boxes give 0.
double Iou(const Box& a, const Box& b);

struct CategoryDetection {
  std::string image_id;
  Box box{};
  double score = 0.0;
};

struct MatchResult {
  std::vector<bool> is_tp;  // in ranked (descending score) order
  std::size_t num_gt = 0;
};

using GroundTruthIndex = std::unordered_map<std::string, std::vector<Box>>;

// Greedy matching of score-ranked detections (stable on ties) to the
// highest-IoU unmatched ground truth of the same image.
MatchResult MatchDetections(std::span<const CategoryDetection> dets, const GroundTruthIndex& gts,
                            double iou_threshold = kDefaultIouThreshold);

// 101-point interpolated AP. nullopt when there is no ground truth.
std::optional<double> AveragePrecision(const std::vector<bool>& ranked_is_tp, std::size_t num_gt);

struct EvalReport {
  std::map<int, double> per_category_ap;
  std::optional<double> ap_novel;
  std::optional<double> ap_base;
  std::optional<double> ap_all;
  std::optional<double> ap_rare;
  std::optional<double> ap_common;
  std::optional<double> ap_frequent;
  std::optional<double> r_mlr_novel;
  std::optional<double> r_mlr_base;
  std::size_t num_images = 0;
  std::size_t num_detections = 0;
  std::size_t num_gt_objects = 0;
};

EvalReport MapReport(std::span<const DetectionSet> dets, std::span<const GroundTruthSet> gts,
                     const CategoryVocabulary& vocab, double iou_threshold = kDefaultIouThreshold);

struct RecallAtK {
  std::optional<double> novel;
  std::optional<double> base;
};

// Micro recall of image labels inside the top-k of prob_mmlr, per split.
RecallAtK RecallAtTopK(std::span<const MlrScores> scores, std::span<const ImageRecord> records,
                       const CategoryVocabulary& vocab, std::size_t k = 10);

// One "key value" pair per line; absent metrics are omitted.
std::string FormatReport(const EvalReport& report, const CategoryVocabulary& vocab);

}  // namespace ctxfuse::eval

#endif  // CTXFUSE_EVAL_HPP_
