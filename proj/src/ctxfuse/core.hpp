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

#ifndef CTXFUSE_CORE_HPP_
#define CTXFUSE_CORE_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ctxfuse {

enum class ErrorCode {
  kInvalidArgument,
  kDegenerateVector,
  kDimensionMismatch,
  kTooFewCategories,
  kInvalidLabel,
  kNovelLabelInTraining,
  kMissingTeacherEmbedding,
  kMissingHead,
  kEmptyDataset,
  kEmptyFeatureMap,
  kUnknownImage,
  kBadMagic,
  kBadVersion,
  kBadDtype,
  kTruncatedPayload,
  kDimOverflow,
  kIo,
  kFormat,
};

const char* ErrorCodeName(ErrorCode code);

// All library failures are reported as this exception; the C API maps
// `code()` onto its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void Fail(ErrorCode code, const std::string& message);

// Dense row-major matrix of doubles. Rows are exposed as spans.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Split { kBase, kNovel };
enum class FrequencyGroup { kRare, kCommon, kFrequent };

const char* SplitName(Split split);
Split ParseSplit(const std::string& name);
const char* GroupName(FrequencyGroup group);
FrequencyGroup ParseGroup(const std::string& name);

struct Category {
  int id = 0;
  std::string name;
  Split split = Split::kBase;
  std::optional<FrequencyGroup> group;

  bool operator==(const Category&) const = default;
};

// The test-time category set, partitioned into base and novel.
class CategoryVocabulary {
 public:
  CategoryVocabulary() = default;
  explicit CategoryVocabulary(std::vector<Category> categories);

  std::size_t size() const noexcept { return categories_.size(); }
  const Category& operator[](std::size_t i) const { return categories_[i]; }
  const std::vector<Category>& categories() const noexcept { return categories_; }

  bool is_valid_id(long long id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < categories_.size();
  }
  bool is_novel(int id) const { return categories_.at(static_cast<std::size_t>(id)).split == Split::kNovel; }
  std::vector<int> ids_in(Split split) const;

  bool operator==(const CategoryVocabulary&) const = default;

 private:
  std::vector<Category> categories_;
};

// A real vector with a flag recording whether it has been L2-normalized.
struct EmbeddingVector {
  std::vector<double> values;
  bool unit = false;

  std::size_t dim() const noexcept { return values.size(); }
};

struct ImageRecord {
  std::string image_id;
  EmbeddingVector global_feature;
  std::optional<EmbeddingVector> teacher_embedding;
  std::vector<int> labels;  // sorted, unique
  std::optional<int> width;
  std::optional<int> height;
};

using Box = std::array<double, 4>;  // x1, y1, x2, y2

bool IsValidBox(const Box& box);

struct ScoredCategory {
  int category_id = 0;
  double probability = 0.0;
};

struct DetectionInstance {
  Box box{};
  std::vector<ScoredCategory> scores;
};

struct DetectionSet {
  std::string image_id;
  std::vector<DetectionInstance> instances;
};

struct GroundTruthObject {
  Box box{};
  int category_id = 0;
};

struct GroundTruthSet {
  std::string image_id;
  std::vector<GroundTruthObject> objects;
};

struct MlrScores {
  std::string image_id;
  std::vector<double> raw_text;
  std::vector<double> raw_image;
  std::vector<double> prob_text;
  std::vector<double> prob_image;
  std::vector<double> prob_mmlr;
};

enum class Variant { kVisualMlr, kVisualMlrPlus };

const char* VariantName(Variant variant);
Variant ParseVariant(const std::string& name);

struct FusionConfig {
  double lambda_base = 0.8;
  double lambda_novel = 0.8;
  double gamma = 0.5;
  double temperature = 0.05;
  Variant variant = Variant::kVisualMlrPlus;
  double prob_floor = 1e-12;

  void Validate() const;
};

void ValidateVocabulary(const CategoryVocabulary& vocab);
void ValidateDetections(const DetectionSet& dets, const CategoryVocabulary& vocab);
void ValidateGroundTruth(const GroundTruthSet& gts, const CategoryVocabulary& vocab);
void ValidateRecord(const ImageRecord& record, const CategoryVocabulary& vocab);

// Elementary math. All kernels run in double precision.

EmbeddingVector L2Normalize(std::span<const double> v);
double Norm(std::span<const double> v);
double Dot(std::span<const double> a, std::span<const double> b);
double CosineSimilarity(std::span<const double> a, std::span<const double> b);

// (s - mean) / population stddev over all entries. Constant input maps to
// the all-zero vector.
std::vector<double> ZScoreNormalize(std::span<const double> s);

double StableSigmoid(double x);

// Softmax over cos(region, text_c) / temperature.
std::vector<double> RegionSoftmax(std::span<const double> region_embed, const Matrix& text_embeds,
                                  double temperature);

}  // namespace ctxfuse

#endif  // CTXFUSE_CORE_HPP_
