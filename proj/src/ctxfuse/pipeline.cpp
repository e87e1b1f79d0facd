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

#include "ctxfuse/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <unordered_map>

#include "ctxfuse/fusion.hpp"
#include "ctxfuse/random.hpp"

namespace ctxfuse::pipeline {
namespace {

fs::path SplitDir(const fs::path& data_dir, const std::string& split) {
  if (split != "train" && split != "test") Fail(ErrorCode::kInvalidArgument, "split must be train or test");
  return data_dir / split;
}

std::vector<DetectionSet> RefineAll(std::span<const DetectionSet> dets, std::span<const MlrScores> scores,
                                    double gamma, double prob_floor) {
  std::unordered_map<std::string, const MlrScores*> by_id;
  for (const auto& s : scores) by_id[s.image_id] = &s;
  std::vector<DetectionSet> out;
  out.reserve(dets.size());
  for (const auto& d : dets) {
    const auto it = by_id.find(d.image_id);
    if (it == by_id.end()) Fail(ErrorCode::kUnknownImage, "no MLR scores for image '" + d.image_id + "'");
    out.push_back(fusion::RefineDetections(d, it->second->prob_mmlr, gamma, prob_floor));
  }
  return out;
}

void RoundHead(mlr::MlrHead& head) {
  io::RoundToStorage(head.weight);
  io::RoundToStorage(head.bias);
}

void RoundScores(MlrScores& s) {
  for (auto* v : {&s.raw_text, &s.raw_image, &s.prob_text, &s.prob_image, &s.prob_mmlr}) io::RoundToStorage(*v);
}

std::vector<MlrScores> ScoreAll(std::span<const ImageRecord> records, const mlr::MlrHead& text_head,
                                const mlr::MlrHead* image_head, const Matrix& text_embeds,
                                const CategoryVocabulary& vocab, const FusionConfig& cfg) {
  std::vector<MlrScores> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(fusion::ScoreImage(r, text_head, image_head, text_embeds, vocab, cfg));
  return out;
}

}  // namespace

void RunSynth(const synth::WorldConfig& cfg, const fs::path& out_dir) { synth::GenerateDataset(cfg, out_dir); }

TrainSummary RunTrain(const fs::path& data_dir, io::Branch branch, const mlr::TrainConfig& config,
                      const fs::path& out_dir) {
  const io::Dataset ds = io::ReadDatasetRoot(data_dir);
  const std::vector<ImageRecord> records = io::ReadRecords(data_dir / "train");
  const mlr::TrainResult result = branch == io::Branch::kText
                                      ? mlr::TrainTextHead(records, ds.text_embeds, ds.vocab, config)
                                      : mlr::TrainImageHead(records, config);
  io::WriteHead(out_dir, result.head, branch, config);
  TrainSummary summary;
  summary.records = records.size();
  if (!result.loss_history.empty()) {
    summary.first_loss = result.loss_history.front();
    summary.final_loss = result.loss_history.back();
  }
  return summary;
}

void RunScore(const fs::path& data_dir, const std::string& split, const fs::path& text_head_dir,
              const std::optional<fs::path>& image_head_dir, const FusionConfig& cfg, const fs::path& out_dir) {
  cfg.Validate();
  const io::Dataset ds = io::ReadDatasetRoot(data_dir);
  const std::vector<ImageRecord> records = io::ReadRecords(SplitDir(data_dir, split));
  const mlr::MlrHead text_head = io::ReadHead(text_head_dir);
  std::optional<mlr::MlrHead> image_head;
  if (cfg.variant == Variant::kVisualMlr) {
    if (!image_head_dir) Fail(ErrorCode::kMissingHead, "the mlr variant needs --image-head");
    image_head = io::ReadHead(*image_head_dir);
  }
  const std::vector<MlrScores> scores =
      ScoreAll(records, text_head, image_head ? &*image_head : nullptr, ds.text_embeds, ds.vocab, cfg);
  io::WriteScores(out_dir, scores, cfg);
}

void RunFuse(const fs::path& data_dir, const std::string& split, const fs::path& scores_dir,
             const std::optional<fs::path>& detections_path, const FusionConfig& cfg, const fs::path& out_dir) {
  cfg.Validate();
  const io::Dataset ds = io::ReadDatasetRoot(data_dir);
  const fs::path det_path = detections_path.value_or(SplitDir(data_dir, split) / "detections.jsonl");
  const std::vector<DetectionSet> dets = io::ReadDetections(det_path);
  for (const auto& d : dets) ValidateDetections(d, ds.vocab);
  std::vector<MlrScores> scores = io::ReadScores(scores_dir);
  const FusionConfig stored = io::ReadScoresConfig(scores_dir);
  if (stored.variant != cfg.variant) {
    Fail(ErrorCode::kInvalidArgument, std::string("scores were computed with variant ") + VariantName(stored.variant) +
                                          "; rerun score to change it");
  }
  if (stored.lambda_base != cfg.lambda_base || stored.lambda_novel != cfg.lambda_novel ||
      stored.prob_floor != cfg.prob_floor) {
    for (auto& s : scores) fusion::RecomputeProbabilities(s, ds.vocab, cfg);
  }
  io::WriteDetections(out_dir / "detections.jsonl", RefineAll(dets, scores, cfg.gamma, cfg.prob_floor));
}

eval::EvalReport RunEval(const fs::path& data_dir, const std::string& split,
                         const std::optional<fs::path>& detections_path, const std::optional<fs::path>& scores_dir,
                         std::size_t k) {
  const io::Dataset ds = io::ReadDatasetRoot(data_dir);
  const fs::path dir = SplitDir(data_dir, split);
  const std::vector<DetectionSet> dets = io::ReadDetections(detections_path.value_or(dir / "detections.jsonl"));
  const std::vector<GroundTruthSet> gts = io::ReadGroundTruth(dir / "groundtruth.jsonl");
  eval::EvalReport report = eval::MapReport(dets, gts, ds.vocab);
  if (scores_dir) {
    const std::vector<MlrScores> scores = io::ReadScores(*scores_dir);
    const std::vector<ImageRecord> records = io::ReadRecords(dir);
    const eval::RecallAtK recall = eval::RecallAtTopK(scores, records, ds.vocab, k);
    report.r_mlr_novel = recall.novel;
    report.r_mlr_base = recall.base;
  }
  return report;
}

GradcheckInstance MakeGradcheckInstance(std::uint64_t seed) {
  constexpr std::size_t kInputDim = 16;
  constexpr std::size_t kOutputDim = 8;
  constexpr std::size_t kCategories = 10;
  constexpr std::size_t kBatch = 4;

  SplitMix64 rng(seed);
  GradcheckInstance inst{mlr::MlrHead::Initialize(kInputDim, kOutputDim, rng()), {}, Matrix(kCategories, kOutputDim)};
  for (double& b : inst.head.bias) b = rng.Uniform(-0.5, 0.5);
  for (double& t : inst.text_embeds.data()) t = rng.Normal();
  for (std::size_t i = 0; i < kBatch; ++i) {
    mlr::BatchExample ex;
    ex.x.resize(kInputDim);
    for (double& v : ex.x) v = rng.Normal();
    const std::size_t n_labels = 1 + static_cast<std::size_t>(rng.Below(3));
    while (ex.labels.size() < n_labels) {
      const auto l = static_cast<int>(rng.Below(kCategories));
      if (std::find(ex.labels.begin(), ex.labels.end(), l) == ex.labels.end()) ex.labels.push_back(l);
    }
    const EmbeddingVector e = mlr::Project(inst.head, ex.x);
    for (double v : e.values) {
      const double offset = rng.Uniform(0.1, 1.0);
      ex.teacher.push_back(v + (rng.Uniform() < 0.5 ? -offset : offset));
    }
    inst.batch.push_back(std::move(ex));
  }
  // Balanced signs in a component give a bias gradient of exactly zero, and
  // the relative error there is pure rounding noise. Flip the last example.
  auto& last = inst.batch.back();
  const EmbeddingVector e_last = mlr::Project(inst.head, last.x);
  for (std::size_t k = 0; k < kOutputDim; ++k) {
    int balance = 0;
    for (const auto& ex : inst.batch) balance += ex.teacher[k] > mlr::Project(inst.head, ex.x).values[k] ? 1 : -1;
    if (balance == 0) last.teacher[k] = 2.0 * e_last.values[k] - last.teacher[k];
  }
  return inst;
}

GradcheckResult RunGradcheck(mlr::LossKind kind, std::uint64_t seed, double h) {
  const GradcheckInstance inst = MakeGradcheckInstance(seed);
  return {mlr::FiniteDiffCheck(inst.head, inst.batch, inst.text_embeds, kind, h),
          mlr::KinkDistance(inst.head, inst.batch, inst.text_embeds, kind)};
}

const char* SweepParamName(SweepParam p) {
  switch (p) {
    case SweepParam::kGamma: return "gamma";
    case SweepParam::kLambdaBase: return "lambda-base";
    case SweepParam::kLambdaNovel: return "lambda-novel";
  }
  return "";
}

SweepParam ParseSweepParam(const std::string& name) {
  if (name == "gamma") return SweepParam::kGamma;
  if (name == "lambda-base") return SweepParam::kLambdaBase;
  if (name == "lambda-novel") return SweepParam::kLambdaNovel;
  Fail(ErrorCode::kInvalidArgument, "unknown sweep parameter '" + name + "'");
}

std::vector<double> DefaultSweepValues(SweepParam p) {
  if (p == SweepParam::kGamma) return {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  return {0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
}

std::vector<SweepRow> Sweep(std::span<const MlrScores> scores, std::span<const DetectionSet> dets,
                            std::span<const GroundTruthSet> gts, const CategoryVocabulary& vocab,
                            const FusionConfig& base, SweepParam param, std::span<const double> values) {
  std::vector<SweepRow> rows;
  for (double value : values) {
    FusionConfig cfg = base;
    switch (param) {
      case SweepParam::kGamma: cfg.gamma = value; break;
      case SweepParam::kLambdaBase: cfg.lambda_base = value; break;
      case SweepParam::kLambdaNovel: cfg.lambda_novel = value; break;
    }
    cfg.Validate();
    std::vector<MlrScores> rescored(scores.begin(), scores.end());
    if (param != SweepParam::kGamma) {
      for (auto& s : rescored) fusion::RecomputeProbabilities(s, vocab, cfg);
    }
    const std::vector<DetectionSet> refined = RefineAll(dets, rescored, cfg.gamma, cfg.prob_floor);
    rows.push_back({param, value, eval::MapReport(refined, gts, vocab)});
  }
  return rows;
}

std::vector<SweepRow> RunSweep(const fs::path& data_dir, const std::string& split, const fs::path& scores_dir,
                               const FusionConfig& base, SweepParam param, std::span<const double> values) {
  const io::Dataset ds = io::ReadDatasetRoot(data_dir);
  const io::SplitFiles files = io::ReadSplit(SplitDir(data_dir, split));
  const std::vector<MlrScores> scores = io::ReadScores(scores_dir);
  return Sweep(scores, files.detections, files.ground_truth, ds.vocab, base, param, values);
}

std::string FormatSweep(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << "param\tvalue\tap_novel\tap_base\tap_all\tap_rare\tap_common\tap_frequent\n";
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    char value[32];
    std::snprintf(value, sizeof(value), "%.2f", r.value);
    os << SweepParamName(r.param) << '\t' << value << '\t' << num(r.report.ap_novel) << '\t' << num(r.report.ap_base)
       << '\t' << num(r.report.ap_all) << '\t' << num(r.report.ap_rare) << '\t' << num(r.report.ap_common) << '\t'
       << num(r.report.ap_frequent) << '\n';
  }
  return os.str();
}

BenchmarkResult RunInProcessBenchmark(const synth::WorldConfig& world_cfg, const mlr::TrainConfig& text_cfg,
                                      const mlr::TrainConfig& image_cfg, const FusionConfig& fusion_cfg,
                                      std::size_t k) {
  const synth::GeneratedDataset data = synth::GenerateInMemory(world_cfg);
  const CategoryVocabulary& vocab = data.world.vocab;
  const Matrix& text_embeds = data.world.prototypes;

  mlr::MlrHead text_head = mlr::TrainTextHead(data.train.records, text_embeds, vocab, text_cfg).head;
  RoundHead(text_head);
  std::optional<mlr::MlrHead> image_head;
  if (fusion_cfg.variant == Variant::kVisualMlr) {
    image_head = mlr::TrainImageHead(data.train.records, image_cfg).head;
    RoundHead(*image_head);
  }

  BenchmarkResult result;
  result.scores =
      ScoreAll(data.test.records, text_head, image_head ? &*image_head : nullptr, text_embeds, vocab, fusion_cfg);
  for (auto& s : result.scores) RoundScores(s);

  result.raw = eval::MapReport(data.test.detections, data.test.ground_truth, vocab);
  const std::vector<DetectionSet> refined =
      RefineAll(data.test.detections, result.scores, fusion_cfg.gamma, fusion_cfg.prob_floor);
  result.fused = eval::MapReport(refined, data.test.ground_truth, vocab);
  const eval::RecallAtK recall = eval::RecallAtTopK(result.scores, data.test.records, vocab, k);
  result.fused.r_mlr_novel = recall.novel;
  result.fused.r_mlr_base = recall.base;
  return result;
}

}  // namespace ctxfuse::pipeline
