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

#ifndef CTXFUSE_PIPELINE_HPP_
#define CTXFUSE_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxfuse/eval.hpp"
#include "ctxfuse/io.hpp"
#include "ctxfuse/mlr.hpp"
#include "ctxfuse/synth.hpp"

namespace ctxfuse::pipeline {

namespace fs = std::filesystem;

void RunSynth(const synth::WorldConfig& cfg, const fs::path& out_dir);

struct TrainSummary {
  double first_loss = 0.0;
  double final_loss = 0.0;
  std::size_t records = 0;
};

// Fits one head on <data>/train and writes it to out_dir.
TrainSummary RunTrain(const fs::path& data_dir, io::Branch branch, const mlr::TrainConfig& config,
                      const fs::path& out_dir);

// image_head_dir is only read for the visual_mlr variant.
void RunScore(const fs::path& data_dir, const std::string& split, const fs::path& text_head_dir,
              const std::optional<fs::path>& image_head_dir, const FusionConfig& cfg, const fs::path& out_dir);

// Refines detections (default <data>/<split>/detections.jsonl) and writes
// out_dir/detections.jsonl. The stored prob_mmlr is used as is when cfg
// matches the ensemble settings it was computed with; otherwise it is
// re-derived from the stored raw scores. The variant cannot change here.
void RunFuse(const fs::path& data_dir, const std::string& split, const fs::path& scores_dir,
             const std::optional<fs::path>& detections_path, const FusionConfig& cfg, const fs::path& out_dir);

// AP report against <data>/<split>/groundtruth.jsonl; recall@k is added when
// a scores directory is given.
eval::EvalReport RunEval(const fs::path& data_dir, const std::string& split,
                         const std::optional<fs::path>& detections_path, const std::optional<fs::path>& scores_dir,
                         std::size_t k);

struct GradcheckInstance {
  mlr::MlrHead head;
  std::vector<mlr::BatchExample> batch;
  Matrix text_embeds;
};

// Random instance with D=16, d=8, C=10 and a batch of 4. Distillation
// targets sit at least 0.1 away from the projection in every component.
GradcheckInstance MakeGradcheckInstance(std::uint64_t seed);

struct GradcheckResult {
  double max_rel_error = 0.0;
  double kink_distance = 0.0;
};

GradcheckResult RunGradcheck(mlr::LossKind kind, std::uint64_t seed, double h);

enum class SweepParam { kGamma, kLambdaBase, kLambdaNovel };

const char* SweepParamName(SweepParam p);
SweepParam ParseSweepParam(const std::string& name);
std::vector<double> DefaultSweepValues(SweepParam p);

struct SweepRow {
  SweepParam param = SweepParam::kGamma;
  double value = 0.0;
  eval::EvalReport report;
};

// One-at-a-time grid over a fusion hyperparameter, re-deriving probabilities
// from the stored raw branch scores.
std::vector<SweepRow> Sweep(std::span<const MlrScores> scores, std::span<const DetectionSet> dets,
                            std::span<const GroundTruthSet> gts, const CategoryVocabulary& vocab,
                            const FusionConfig& base, SweepParam param, std::span<const double> values);

std::vector<SweepRow> RunSweep(const fs::path& data_dir, const std::string& split, const fs::path& scores_dir,
                               const FusionConfig& base, SweepParam param, std::span<const double> values);

std::string FormatSweep(std::span<const SweepRow> rows);

struct BenchmarkResult {
  eval::EvalReport raw;
  eval::EvalReport fused;
  std::vector<MlrScores> scores;
};

// synth -> train -> score -> fuse -> eval entirely in memory. Values are
// rounded to storage precision wherever the file pipeline would store them,
// so the result matches the CLI pipeline run on the same configuration.
BenchmarkResult RunInProcessBenchmark(const synth::WorldConfig& world_cfg, const mlr::TrainConfig& text_cfg,
                                      const mlr::TrainConfig& image_cfg, const FusionConfig& fusion_cfg,
                                      std::size_t k = 10);

}  // namespace ctxfuse::pipeline

#endif  // CTXFUSE_PIPELINE_HPP_
