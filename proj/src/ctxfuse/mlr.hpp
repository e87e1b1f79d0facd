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

#ifndef CTXFUSE_MLR_HPP_
#define CTXFUSE_MLR_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "ctxfuse/core.hpp"

namespace ctxfuse::mlr {

// Affine projection e = W x + b from the global feature space (D) into the
// shared embedding space (d). W is d x D.
struct MlrHead {
  Matrix weight;
  std::vector<double> bias;

  std::size_t input_dim() const noexcept { return weight.cols(); }
  std::size_t output_dim() const noexcept { return weight.rows(); }

  // Weights ~ U(-1/sqrt(D), 1/sqrt(D)) drawn row-major from splitmix64(seed),
  // bias zero.
  static MlrHead Initialize(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed);

  bool operator==(const MlrHead&) const = default;
};

// Gradient tensors, shaped like MlrHead.
struct HeadGradient {
  Matrix weight;
  std::vector<double> bias;

  static HeadGradient ZerosLike(const MlrHead& head);
  void AddScaled(const HeadGradient& other, double scale);
  bool IsZero() const;
};

enum class LossReduction { kSum, kMeanPairs };

const char* ReductionName(LossReduction r);
LossReduction ParseReduction(const std::string& name);

struct TrainConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  std::uint64_t iterations = 2000;
  std::uint64_t seed = 0;
  LossReduction loss_reduction = LossReduction::kMeanPairs;

  void Validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct OptimizerState {
  HeadGradient first_moment;
  HeadGradient second_moment;
  std::uint64_t step_count = 0;

  static OptimizerState ZerosLike(const MlrHead& head);
};

// One pyramid level, stored height x width x channels row-major.
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> values;
};

// Channel-wise spatial max per level, concatenated in level order.
EmbeddingVector GlobalPoolConcat(std::span<const FeatureMap> levels);

EmbeddingVector Project(const MlrHead& head, std::span<const double> x);

// s_c = cos(project(head, x), t_c) for every row t_c.
std::vector<double> BranchScores(const MlrHead& head, std::span<const double> x, const Matrix& text_embeds);

// Pairwise hinge max(1 + s_n - s_p, 0) over positives p and negatives n.
double RankLoss(std::span<const double> scores, std::span<const int> labels, LossReduction reduction);

double DistLoss(std::span<const double> e_image, std::span<const double> teacher);

struct LossAndGrad {
  double loss = 0.0;
  HeadGradient grad;
};

// Gradients are exact except at kinks, where the subgradient is taken as 0.
LossAndGrad RankLossGrad(const MlrHead& head, std::span<const double> x, const Matrix& text_embeds,
                         std::span<const int> labels, LossReduction reduction);
LossAndGrad DistLossGrad(const MlrHead& head, std::span<const double> x, std::span<const double> teacher);

// Decoupled-weight-decay Adam. Updates head and state in place.
void AdamWStep(MlrHead& head, OptimizerState& state, const HeadGradient& grads, const TrainConfig& config);

enum class LossKind { kRank, kDist };

struct BatchExample {
  std::vector<double> x;
  std::vector<int> labels;
  std::vector<double> teacher;
};

// Mean of the per-image loss over the batch, with its gradient.
double BatchLoss(const MlrHead& head, std::span<const BatchExample> batch, const Matrix& text_embeds,
                 LossKind kind, LossReduction reduction);
LossAndGrad BatchLossGrad(const MlrHead& head, std::span<const BatchExample> batch, const Matrix& text_embeds,
                          LossKind kind, LossReduction reduction);

// Max relative error between the analytic gradient and central differences
// over every parameter; the denominator is max(|a|, |f|, 1e-12).
double FiniteDiffCheck(const MlrHead& head, std::span<const BatchExample> batch, const Matrix& text_embeds,
                       LossKind kind, double h, LossReduction reduction = LossReduction::kMeanPairs);

// Smallest |1 + s_n - s_p| (rank) or |teacher_k - e_k| (dist) in the batch.
// Finite differences are only meaningful away from these kinks.
double KinkDistance(const MlrHead& head, std::span<const BatchExample> batch, const Matrix& text_embeds,
                    LossKind kind);

struct TrainResult {
  MlrHead head;
  std::vector<double> loss_history;  // one batch loss per iteration
};

// Rank-loss training against base-category text embeddings only. Records may
// carry base labels only.
TrainResult TrainTextHead(std::span<const ImageRecord> dataset, const Matrix& text_embeds,
                          const CategoryVocabulary& vocab, const TrainConfig& config);

// L1 distillation of teacher embeddings.
TrainResult TrainImageHead(std::span<const ImageRecord> dataset, const TrainConfig& config);

}  // namespace ctxfuse::mlr

#endif  // CTXFUSE_MLR_HPP_
