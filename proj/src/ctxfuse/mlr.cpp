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

#include "ctxfuse/mlr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ctxfuse/random.hpp"

namespace ctxfuse::mlr {
namespace {

std::vector<int> CheckedLabels(std::span<const int> labels, std::size_t num_categories) {
  std::vector<int> out(labels.begin(), labels.end());
  for (int l : out) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_categories) {
      Fail(ErrorCode::kInvalidLabel, "label " + std::to_string(l) + " outside 0.." +
                                         std::to_string(num_categories) + "-1");
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<bool> PositiveMask(std::span<const int> sorted_labels, std::size_t num_categories) {
  std::vector<bool> mask(num_categories, false);
  for (int l : sorted_labels) mask[static_cast<std::size_t>(l)] = true;
  return mask;
}

double Sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void CheckHeadInput(const MlrHead& head, std::span<const double> x) {
  if (x.size() != head.input_dim()) {
    Fail(ErrorCode::kDimensionMismatch, "head expects input dim " + std::to_string(head.input_dim()) + ", got " +
                                            std::to_string(x.size()));
  }
}

// Accumulates d(loss)/d(e) into the parameter gradient: dW = g xᵀ, db = g.
void BackpropAffine(std::span<const double> grad_e, std::span<const double> x, HeadGradient& out) {
  for (std::size_t i = 0; i < grad_e.size(); ++i) {
    auto row = out.weight.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) row[j] += grad_e[i] * x[j];
    out.bias[i] += grad_e[i];
  }
}

}  // namespace

MlrHead MlrHead::Initialize(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed) {
  if (input_dim == 0 || output_dim == 0) Fail(ErrorCode::kInvalidArgument, "head dimensions must be positive");
  SplitMix64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  MlrHead head{Matrix(output_dim, input_dim), std::vector<double>(output_dim, 0.0)};
  for (double& w : head.weight.data()) w = rng.Uniform(-bound, bound);
  return head;
}

HeadGradient HeadGradient::ZerosLike(const MlrHead& head) {
  return {Matrix(head.output_dim(), head.input_dim()), std::vector<double>(head.output_dim(), 0.0)};
}

void HeadGradient::AddScaled(const HeadGradient& other, double scale) {
  if (other.weight.size() != weight.size() || other.bias.size() != bias.size()) {
    Fail(ErrorCode::kDimensionMismatch, "gradient shapes differ");
  }
  for (std::size_t i = 0; i < weight.size(); ++i) weight.data()[i] += scale * other.weight.data()[i];
  for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += scale * other.bias[i];
}

bool HeadGradient::IsZero() const {
  auto zero = [](double v) { return v == 0.0; };
  return std::all_of(weight.data().begin(), weight.data().end(), zero) && std::all_of(bias.begin(), bias.end(), zero);
}

const char* ReductionName(LossReduction r) { return r == LossReduction::kSum ? "sum" : "mean_pairs"; }

LossReduction ParseReduction(const std::string& name) {
  if (name == "sum") return LossReduction::kSum;
  if (name == "mean_pairs") return LossReduction::kMeanPairs;
  Fail(ErrorCode::kInvalidArgument, "unknown loss reduction '" + name + "'");
}

void TrainConfig::Validate() const {
  if (!(learning_rate > 0.0)) Fail(ErrorCode::kInvalidArgument, "learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    Fail(ErrorCode::kInvalidArgument, "betas must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) Fail(ErrorCode::kInvalidArgument, "epsilon must be positive");
  if (!(weight_decay >= 0.0)) Fail(ErrorCode::kInvalidArgument, "weight_decay must be non-negative");
  if (batch_size == 0) Fail(ErrorCode::kInvalidArgument, "batch_size must be positive");
}

OptimizerState OptimizerState::ZerosLike(const MlrHead& head) {
  return {HeadGradient::ZerosLike(head), HeadGradient::ZerosLike(head), 0};
}

EmbeddingVector GlobalPoolConcat(std::span<const FeatureMap> levels) {
  if (levels.empty()) Fail(ErrorCode::kEmptyFeatureMap, "no pyramid levels");
  EmbeddingVector out;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const FeatureMap& level = levels[l];
    const std::size_t cells = level.height * level.width;
    if (cells == 0 || level.channels == 0) {
      Fail(ErrorCode::kEmptyFeatureMap, "level " + std::to_string(l) + " is empty");
    }
    if (level.values.size() != cells * level.channels) {
      Fail(ErrorCode::kDimensionMismatch, "level " + std::to_string(l) + " data does not match its shape");
    }
    for (std::size_t ch = 0; ch < level.channels; ++ch) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t cell = 0; cell < cells; ++cell) best = std::max(best, level.values[cell * level.channels + ch]);
      out.values.push_back(best);
    }
  }
  return out;
}

EmbeddingVector Project(const MlrHead& head, std::span<const double> x) {
  CheckHeadInput(head, x);
  EmbeddingVector out;
  out.values.resize(head.output_dim());
  for (std::size_t i = 0; i < head.output_dim(); ++i) out.values[i] = Dot(head.weight.row(i), x) + head.bias[i];
  return out;
}

std::vector<double> BranchScores(const MlrHead& head, std::span<const double> x, const Matrix& text_embeds) {
  const EmbeddingVector e = Project(head, x);
  if (text_embeds.cols() != e.dim()) {
    Fail(ErrorCode::kDimensionMismatch, "text embeddings have dim " + std::to_string(text_embeds.cols()) +
                                            ", head outputs " + std::to_string(e.dim()));
  }
  std::vector<double> scores(text_embeds.rows());
  for (std::size_t c = 0; c < scores.size(); ++c) scores[c] = CosineSimilarity(e.values, text_embeds.row(c));
  return scores;
}

double RankLoss(std::span<const double> scores, std::span<const int> labels, LossReduction reduction) {
  const std::vector<int> positives = CheckedLabels(labels, scores.size());
  const std::vector<bool> is_pos = PositiveMask(positives, scores.size());
  double loss = 0.0;
  std::size_t pairs = 0;
  for (int p : positives) {
    for (std::size_t n = 0; n < scores.size(); ++n) {
      if (is_pos[n]) continue;
      loss += std::max(1.0 + scores[n] - scores[static_cast<std::size_t>(p)], 0.0);
      ++pairs;
    }
  }
  if (reduction == LossReduction::kMeanPairs && pairs > 0) loss /= static_cast<double>(pairs);
  return loss;
}

double DistLoss(std::span<const double> e_image, std::span<const double> teacher) {
  if (e_image.size() != teacher.size()) Fail(ErrorCode::kDimensionMismatch, "distillation operands differ in dim");
  double loss = 0.0;
  for (std::size_t k = 0; k < teacher.size(); ++k) loss += std::abs(teacher[k] - e_image[k]);
  return loss;
}

LossAndGrad RankLossGrad(const MlrHead& head, std::span<const double> x, const Matrix& text_embeds,
                         std::span<const int> labels, LossReduction reduction) {
  const EmbeddingVector e = Project(head, x);
  if (text_embeds.cols() != e.dim()) Fail(ErrorCode::kDimensionMismatch, "text embedding dim differs from head");
  const std::size_t num_cat = text_embeds.rows();
  const std::vector<int> positives = CheckedLabels(labels, num_cat);
  const std::vector<bool> is_pos = PositiveMask(positives, num_cat);

  const double e_norm = Norm(e.values);
  if (e_norm == 0.0) Fail(ErrorCode::kDegenerateVector, "projected embedding has zero norm");
  std::vector<double> t_norm(num_cat);
  std::vector<double> scores(num_cat);
  for (std::size_t c = 0; c < num_cat; ++c) {
    t_norm[c] = Norm(text_embeds.row(c));
    if (t_norm[c] == 0.0) Fail(ErrorCode::kDegenerateVector, "text embedding row has zero norm");
    scores[c] = std::clamp(Dot(e.values, text_embeds.row(c)) / (e_norm * t_norm[c]), -1.0, 1.0);
  }

  LossAndGrad out{0.0, HeadGradient::ZerosLike(head)};
  std::vector<double> d_scores(num_cat, 0.0);
  std::size_t pairs = 0;
  for (int p : positives) {
    const auto pi = static_cast<std::size_t>(p);
    for (std::size_t n = 0; n < num_cat; ++n) {
      if (is_pos[n]) continue;
      ++pairs;
      const double margin = 1.0 + scores[n] - scores[pi];
      if (margin > 0.0) {
        out.loss += margin;
        d_scores[n] += 1.0;
        d_scores[pi] -= 1.0;
      }
    }
  }
  if (pairs == 0) return out;
  const double scale = reduction == LossReduction::kMeanPairs ? 1.0 / static_cast<double>(pairs) : 1.0;
  out.loss *= scale;

  // ds_c/de = t_c / (|e| |t_c|) - s_c e / |e|^2
  std::vector<double> grad_e(e.dim(), 0.0);
  for (std::size_t c = 0; c < num_cat; ++c) {
    if (d_scores[c] == 0.0) continue;
    const double w = d_scores[c] * scale;
    const auto t = text_embeds.row(c);
    const double a = w / (e_norm * t_norm[c]);
    const double b = w * scores[c] / (e_norm * e_norm);
    for (std::size_t k = 0; k < grad_e.size(); ++k) grad_e[k] += a * t[k] - b * e.values[k];
  }
  BackpropAffine(grad_e, x, out.grad);
  return out;
}

LossAndGrad DistLossGrad(const MlrHead& head, std::span<const double> x, std::span<const double> teacher) {
  const EmbeddingVector e = Project(head, x);
  LossAndGrad out{DistLoss(e.values, teacher), HeadGradient::ZerosLike(head)};
  std::vector<double> grad_e(e.dim());
  for (std::size_t k = 0; k < grad_e.size(); ++k) grad_e[k] = Sign(e.values[k] - teacher[k]);
  BackpropAffine(grad_e, x, out.grad);
  return out;
}

void AdamWStep(MlrHead& head, OptimizerState& state, const HeadGradient& grads, const TrainConfig& config) {
  const std::size_t n_w = head.weight.size();
  const std::size_t n_b = head.bias.size();
  if (grads.weight.size() != n_w || grads.bias.size() != n_b || state.first_moment.weight.size() != n_w ||
      state.first_moment.bias.size() != n_b || state.second_moment.weight.size() != n_w ||
      state.second_moment.bias.size() != n_b) {
    Fail(ErrorCode::kDimensionMismatch, "optimizer state, gradient and head shapes differ");
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  const double lr = config.learning_rate;

  auto update = [&](double& w, double g, double& m, double& v) {
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g * g;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    w = w - lr * config.weight_decay * w - lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
  };
  for (std::size_t i = 0; i < n_w; ++i) {
    update(head.weight.data()[i], grads.weight.data()[i], state.first_moment.weight.data()[i],
           state.second_moment.weight.data()[i]);
  }
  for (std::size_t i = 0; i < n_b; ++i) {
    update(head.bias[i], grads.bias[i], state.first_moment.bias[i], state.second_moment.bias[i]);
  }
}

double BatchLoss(const MlrHead& head, std::span<const BatchExample> batch, const Matrix& text_embeds,
                 LossKind kind, LossReduction reduction) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : batch) {
    total += kind == LossKind::kRank ? RankLoss(BranchScores(head, ex.x, text_embeds), ex.labels, reduction)
                                     : DistLoss(Project(head, ex.x).values, ex.teacher);
  }
  return total / static_cast<double>(batch.size());
}

LossAndGrad BatchLossGrad(const MlrHead& head, std::span<const BatchExample> batch, const Matrix& text_embeds,
                          LossKind kind, LossReduction reduction) {
  LossAndGrad out{0.0, HeadGradient::ZerosLike(head)};
  if (batch.empty()) return out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    const LossAndGrad one = kind == LossKind::kRank ? RankLossGrad(head, ex.x, text_embeds, ex.labels, reduction)
                                                    : DistLossGrad(head, ex.x, ex.teacher);
    out.loss += one.loss * inv;
    out.grad.AddScaled(one.grad, inv);
  }
  return out;
}

double FiniteDiffCheck(const MlrHead& head, std::span<const BatchExample> batch, const Matrix& text_embeds,
                       LossKind kind, double h, LossReduction reduction) {
  if (!(h > 0.0)) Fail(ErrorCode::kInvalidArgument, "finite-difference step must be positive");
  const HeadGradient analytic = BatchLossGrad(head, batch, text_embeds, kind, reduction).grad;
  MlrHead probe = head;
  double worst = 0.0;
  auto check = [&](double& param, double analytic_value) {
    const double saved = param;
    param = saved + h;
    const double up = BatchLoss(probe, batch, text_embeds, kind, reduction);
    param = saved - h;
    const double down = BatchLoss(probe, batch, text_embeds, kind, reduction);
    param = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic_value), std::abs(numeric), 1e-12});
    worst = std::max(worst, std::abs(analytic_value - numeric) / denom);
  };
  for (std::size_t i = 0; i < probe.weight.size(); ++i) check(probe.weight.data()[i], analytic.weight.data()[i]);
  for (std::size_t i = 0; i < probe.bias.size(); ++i) check(probe.bias[i], analytic.bias[i]);
  return worst;
}

double KinkDistance(const MlrHead& head, std::span<const BatchExample> batch, const Matrix& text_embeds,
                    LossKind kind) {
  double closest = std::numeric_limits<double>::infinity();
  for (const auto& ex : batch) {
    if (kind == LossKind::kRank) {
      const std::vector<double> s = BranchScores(head, ex.x, text_embeds);
      const std::vector<int> positives = CheckedLabels(ex.labels, s.size());
      const std::vector<bool> is_pos = PositiveMask(positives, s.size());
      for (int p : positives) {
        for (std::size_t n = 0; n < s.size(); ++n) {
          if (!is_pos[n]) closest = std::min(closest, std::abs(1.0 + s[n] - s[static_cast<std::size_t>(p)]));
        }
      }
    } else {
      const EmbeddingVector e = Project(head, ex.x);
      for (std::size_t k = 0; k < e.dim(); ++k) closest = std::min(closest, std::abs(ex.teacher[k] - e.values[k]));
    }
  }
  return closest;
}

namespace {

// Seeded epoch-wise shuffling; the final partial batch of an epoch is kept.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, SplitMix64& rng)
      : order_(n), batch_size_(batch_size), rng_(rng) {
    Reshuffle();
  }

  std::span<const std::size_t> Next() {
    if (cursor_ >= order_.size()) Reshuffle();
    const std::size_t take = std::min(batch_size_, order_.size() - cursor_);
    std::span<const std::size_t> out(order_.data() + cursor_, take);
    cursor_ += take;
    return out;
  }

 private:
  void Reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.Shuffle(std::span<std::size_t>(order_));
    cursor_ = 0;
  }

  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  SplitMix64& rng_;
  std::size_t cursor_ = 0;
};

template <typename MakeExample>
TrainResult RunTraining(MlrHead head, std::size_t n_records, const Matrix& text_embeds, LossKind kind,
                        const TrainConfig& config, MakeExample make_example) {
  // The init stream continues into batch shuffling.
  SplitMix64 rng(config.seed);
  for (std::size_t i = 0; i < head.weight.size(); ++i) rng();

  std::vector<BatchExample> examples;
  examples.reserve(n_records);
  for (std::size_t i = 0; i < n_records; ++i) examples.push_back(make_example(i));

  TrainResult result{std::move(head), {}};
  if (config.iterations == 0) return result;
  result.loss_history.reserve(config.iterations);
  OptimizerState state = OptimizerState::ZerosLike(result.head);
  BatchSampler sampler(n_records, config.batch_size, rng);
  std::vector<BatchExample> batch;
  for (std::uint64_t it = 0; it < config.iterations; ++it) {
    batch.clear();
    for (std::size_t idx : sampler.Next()) batch.push_back(examples[idx]);
    const LossAndGrad lg = BatchLossGrad(result.head, batch, text_embeds, kind, config.loss_reduction);
    result.loss_history.push_back(lg.loss);
    AdamWStep(result.head, state, lg.grad, config);
  }
  return result;
}

}  // namespace

TrainResult TrainTextHead(std::span<const ImageRecord> dataset, const Matrix& text_embeds,
                          const CategoryVocabulary& vocab, const TrainConfig& config) {
  config.Validate();
  if (dataset.empty()) Fail(ErrorCode::kEmptyDataset, "text head training needs at least one record");
  if (text_embeds.rows() != vocab.size()) {
    Fail(ErrorCode::kDimensionMismatch, "text embedding table has " + std::to_string(text_embeds.rows()) +
                                            " rows for " + std::to_string(vocab.size()) + " categories");
  }
  // Only base rows take part in the ranking; labels are remapped into that
  // index space.
  const std::vector<int> base_ids = vocab.ids_in(Split::kBase);
  std::vector<int> to_base(vocab.size(), -1);
  Matrix base_embeds(base_ids.size(), text_embeds.cols());
  for (std::size_t b = 0; b < base_ids.size(); ++b) {
    to_base[static_cast<std::size_t>(base_ids[b])] = static_cast<int>(b);
    std::copy_n(text_embeds.row(static_cast<std::size_t>(base_ids[b])).begin(), text_embeds.cols(),
                base_embeds.row(b).begin());
  }
  const std::size_t input_dim = dataset.front().global_feature.dim();
  for (const auto& rec : dataset) {
    if (rec.global_feature.dim() != input_dim) {
      Fail(ErrorCode::kDimensionMismatch, "global features of differing dimension (" + rec.image_id + ")");
    }
    for (int l : rec.labels) {
      if (!vocab.is_valid_id(l)) Fail(ErrorCode::kInvalidLabel, "label " + std::to_string(l) + " in " + rec.image_id);
      if (vocab.is_novel(l)) {
        Fail(ErrorCode::kNovelLabelInTraining, "record " + rec.image_id + " carries novel label " + std::to_string(l));
      }
    }
  }
  MlrHead head = MlrHead::Initialize(input_dim, text_embeds.cols(), config.seed);
  return RunTraining(std::move(head), dataset.size(), base_embeds, LossKind::kRank, config, [&](std::size_t i) {
    BatchExample ex{dataset[i].global_feature.values, {}, {}};
    for (int l : dataset[i].labels) ex.labels.push_back(to_base[static_cast<std::size_t>(l)]);
    return ex;
  });
}

TrainResult TrainImageHead(std::span<const ImageRecord> dataset, const TrainConfig& config) {
  config.Validate();
  if (dataset.empty()) Fail(ErrorCode::kEmptyDataset, "image head training needs at least one record");
  const std::size_t input_dim = dataset.front().global_feature.dim();
  std::size_t output_dim = 0;
  for (const auto& rec : dataset) {
    if (!rec.teacher_embedding) {
      Fail(ErrorCode::kMissingTeacherEmbedding, "record " + rec.image_id + " has no teacher embedding");
    }
    if (output_dim == 0) output_dim = rec.teacher_embedding->dim();
    if (rec.teacher_embedding->dim() != output_dim || rec.global_feature.dim() != input_dim) {
      Fail(ErrorCode::kDimensionMismatch, "inconsistent embedding dimensions (" + rec.image_id + ")");
    }
  }
  MlrHead head = MlrHead::Initialize(input_dim, output_dim, config.seed);
  return RunTraining(std::move(head), dataset.size(), Matrix(), LossKind::kDist, config, [&](std::size_t i) {
    return BatchExample{dataset[i].global_feature.values, {}, dataset[i].teacher_embedding->values};
  });
}

}  // namespace ctxfuse::mlr
