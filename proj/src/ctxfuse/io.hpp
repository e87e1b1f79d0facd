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

// On-disk formats.
//
// Tensor file (.sict), all integers little-endian:
//   "SICT" | u32 version = 1 | u32 dtype = 1 (float32) | u32 ndim |
//   ndim x u64 dims | row-major float32 payload
//
// Dataset root:
//   vocab.json               {"categories": [{id, name, split, group?}]}
//   text_embeddings.sict     C x d
//   <split>/images.jsonl     {image_id, labels, global_row, teacher_row, width?, height?}
//   <split>/global.sict      N x D
//   <split>/teacher.sict     N x d (absent when no record has a teacher)
//   <split>/detections.jsonl {image_id, instances: [{box, scores: [[id, p]]}]}
//   <split>/groundtruth.jsonl {image_id, objects: [{box, category_id}]}

#ifndef CTXFUSE_IO_HPP_
#define CTXFUSE_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxfuse/core.hpp"
#include "ctxfuse/eval.hpp"
#include "ctxfuse/mlr.hpp"
#include "ctxfuse/synth.hpp"

namespace ctxfuse::io {

namespace fs = std::filesystem;

inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> values;
};

std::string EncodeTensor(const Tensor& tensor);
Tensor DecodeTensor(std::string_view bytes);
void WriteTensor(const fs::path& path, const Tensor& tensor);
Tensor ReadTensor(const fs::path& path);

// Matrices are stored as 2-D float32 tensors; values are narrowed on write.
void WriteMatrix(const fs::path& path, const Matrix& m);
Matrix ReadMatrix(const fs::path& path);

// Rounds every entry to the nearest float32, as storage would.
double ToStorage(double v);
void RoundToStorage(std::vector<double>& values);
void RoundToStorage(Matrix& m);

std::string ReadText(const fs::path& path);
// Writes atomically enough for a single writer: full contents, then close.
void WriteText(const fs::path& path, std::string_view contents);

CategoryVocabulary ReadVocabulary(const fs::path& path);
void WriteVocabulary(const fs::path& path, const CategoryVocabulary& vocab);

std::vector<DetectionSet> ReadDetections(const fs::path& path);
void WriteDetections(const fs::path& path, std::span<const DetectionSet> dets);

std::vector<GroundTruthSet> ReadGroundTruth(const fs::path& path);
void WriteGroundTruth(const fs::path& path, std::span<const GroundTruthSet> gts);

struct SplitFiles {
  std::vector<ImageRecord> records;
  std::vector<DetectionSet> detections;
  std::vector<GroundTruthSet> ground_truth;
};

void WriteDatasetRoot(const fs::path& root, const CategoryVocabulary& vocab, const Matrix& text_embeds);
void WriteSplit(const fs::path& dir, std::span<const ImageRecord> records, std::span<const DetectionSet> dets,
                std::span<const GroundTruthSet> gts);
std::vector<ImageRecord> ReadRecords(const fs::path& split_dir);
SplitFiles ReadSplit(const fs::path& split_dir);

struct Dataset {
  CategoryVocabulary vocab;
  Matrix text_embeds;
};

Dataset ReadDatasetRoot(const fs::path& root);

// Checks every file of a dataset root (both splits when present) against the
// vocabulary and the tensor shapes. Throws on the first violation.
void ValidateDataset(const fs::path& root);

synth::WorldConfig ReadWorldConfig(const fs::path& path);
synth::WorldConfig ParseWorldConfig(std::string_view json_text);
void WriteWorldConfig(const fs::path& path, const synth::WorldConfig& cfg);

mlr::TrainConfig ReadTrainConfig(const fs::path& path);
mlr::TrainConfig ParseTrainConfig(std::string_view json_text);

enum class Branch { kText, kImage };
const char* BranchName(Branch b);
Branch ParseBranch(const std::string& name);

// A head directory holds weight.sict (d x D), bias.sict (d) and head.json
// (dims, branch, training config).
void WriteHead(const fs::path& dir, const mlr::MlrHead& head, Branch branch, const mlr::TrainConfig& config);
mlr::MlrHead ReadHead(const fs::path& dir);

// A scores directory holds one N x C tensor per MlrScores field, scores.jsonl
// ({image_id, row}) and scores.json (fusion settings used).
void WriteScores(const fs::path& dir, std::span<const MlrScores> scores, const FusionConfig& cfg);
std::vector<MlrScores> ReadScores(const fs::path& dir);
// Fusion settings recorded by WriteScores; temperature keeps its default.
FusionConfig ReadScoresConfig(const fs::path& dir);

std::string ReportToJson(const eval::EvalReport& report, const CategoryVocabulary& vocab);
void WriteReport(const fs::path& dir, const eval::EvalReport& report, const CategoryVocabulary& vocab);

}  // namespace ctxfuse::io

#endif  // CTXFUSE_IO_HPP_
