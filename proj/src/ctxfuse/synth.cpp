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

#include "ctxfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "ctxfuse/io.hpp"

namespace ctxfuse::synth {
namespace {

constexpr double kCoreWeight = 1.0;
constexpr double kBackgroundWeight = 0.03;

std::vector<double> NoiseVector(SplitMix64& rng, std::size_t dim, double magnitude) {
  std::vector<double> v(dim);
  const double scale = magnitude / std::sqrt(static_cast<double>(dim));
  for (double& x : v) x = scale * rng.Normal();
  return v;
}

std::size_t SampleCategorical(SplitMix64& rng, std::span<const double> probs) {
  const double u = rng.Uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

std::string CategoryName(std::size_t c, std::size_t n_base) {
  char buf[32];
  if (c < n_base) {
    std::snprintf(buf, sizeof(buf), "base_%02zu", c);
  } else {
    std::snprintf(buf, sizeof(buf), "novel_%02zu", c - n_base);
  }
  return buf;
}

std::string ImageId(const char* split, std::size_t index) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s_%06zu", split, index);
  return buf;
}

}  // namespace

void WorldConfig::Validate() const {
  if (n_categories < 2) Fail(ErrorCode::kInvalidArgument, "n_categories must be at least 2");
  if (n_base == 0 || n_base >= n_categories) Fail(ErrorCode::kInvalidArgument, "need 0 < n_base < n_categories");
  if (n_themes == 0) Fail(ErrorCode::kInvalidArgument, "n_themes must be positive");
  if (embed_dim == 0 || global_dim == 0) Fail(ErrorCode::kInvalidArgument, "dimensions must be positive");
  if (objects_min == 0 || objects_min > objects_max) Fail(ErrorCode::kInvalidArgument, "bad objects_per_image range");
  if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0)) Fail(ErrorCode::kInvalidArgument, "hard_fraction not in [0,1]");
  if (!(regional_noise >= 0.0) || !(global_noise >= 0.0)) Fail(ErrorCode::kInvalidArgument, "noise must be >= 0");
  if (!(hard_noise_multiplier > 1.0)) Fail(ErrorCode::kInvalidArgument, "hard_noise_multiplier must be > 1");
  if (!(temperature > 0.0)) Fail(ErrorCode::kInvalidArgument, "temperature must be positive");
  if (top_k == 0) Fail(ErrorCode::kInvalidArgument, "top_k must be positive");
  if (!(image_width > 1.0 && image_height > 1.0)) Fail(ErrorCode::kInvalidArgument, "image size too small");
}

SyntheticWorld GenerateWorld(const WorldConfig& cfg) {
  cfg.Validate();
  SplitMix64 rng(cfg.seed);
  const std::size_t C = cfg.n_categories;
  const std::size_t T = cfg.n_themes;
  const std::size_t d = cfg.embed_dim;
  const std::size_t D = cfg.global_dim;

  SyntheticWorld world;
  world.prototypes = Matrix(C, d);
  for (std::size_t c = 0; c < C; ++c) {
    const EmbeddingVector p = L2Normalize(NoiseVector(rng, d, 1.0));
    for (std::size_t k = 0; k < d; ++k) world.prototypes(c, k) = io::ToStorage(p.values[k]);
  }

  // Each category is a core member of exactly one theme; the rest of a
  // theme's mass is spread thinly over every other category.
  std::vector<std::size_t> perm(C);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.Shuffle(std::span<std::size_t>(perm));
  world.theme_table = Matrix(T, C, kBackgroundWeight);
  for (std::size_t i = 0; i < C; ++i) world.theme_table(i % T, perm[i]) = kCoreWeight;
  for (std::size_t t = 0; t < T; ++t) {
    auto row = world.theme_table.row(t);
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& v : row) v /= total;
  }

  // Theme vectors point along the theme's expected prototype mixture.
  world.themes = Matrix(T, d);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> mix(d, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < d; ++k) mix[k] += world.theme_table(t, c) * world.prototypes(c, k);
    }
    const EmbeddingVector u = L2Normalize(mix);
    std::copy(u.values.begin(), u.values.end(), world.themes.row(t).begin());
  }

  world.lifting = Matrix(D, d);
  const double lift_scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : world.lifting.data()) v = lift_scale * rng.Normal();

  // Novel categories are rare; base categories split by expected frequency.
  std::vector<double> marginal(C, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) marginal[c] += world.theme_table(t, c);
  }
  std::vector<std::size_t> base_order(cfg.n_base);
  std::iota(base_order.begin(), base_order.end(), std::size_t{0});
  std::stable_sort(base_order.begin(), base_order.end(),
                   [&](std::size_t a, std::size_t b) { return marginal[a] > marginal[b]; });
  std::vector<FrequencyGroup> group(C, FrequencyGroup::kRare);
  for (std::size_t r = 0; r < base_order.size(); ++r) {
    group[base_order[r]] = r < (base_order.size() + 1) / 2 ? FrequencyGroup::kFrequent : FrequencyGroup::kCommon;
  }
  std::vector<Category> cats;
  for (std::size_t c = 0; c < C; ++c) {
    cats.push_back({static_cast<int>(c), CategoryName(c, cfg.n_base), c < cfg.n_base ? Split::kBase : Split::kNovel,
                    group[c]});
  }
  world.vocab = CategoryVocabulary(std::move(cats));
  return world;
}

Scene GenerateScene(const SyntheticWorld& world, const WorldConfig& cfg, SplitMix64& rng,
                    const std::string& image_id) {
  const std::size_t d = cfg.embed_dim;
  const std::size_t D = cfg.global_dim;
  Scene scene;
  scene.theme = static_cast<std::size_t>(rng.Below(cfg.n_themes));
  const std::size_t n_obj = cfg.objects_min + static_cast<std::size_t>(rng.Below(cfg.objects_max - cfg.objects_min + 1));

  scene.record.image_id = image_id;
  scene.ground_truth.image_id = image_id;
  scene.detections.image_id = image_id;
  scene.record.width = static_cast<int>(cfg.image_width);
  scene.record.height = static_cast<int>(cfg.image_height);

  std::set<int> present;
  for (std::size_t o = 0; o < n_obj; ++o) {
    const auto cat = static_cast<int>(SampleCategorical(rng, world.theme_table.row(scene.theme)));
    present.insert(cat);

    const double w = rng.Uniform(0.1, 0.4) * cfg.image_width;
    const double h = rng.Uniform(0.1, 0.4) * cfg.image_height;
    const double x1 = rng.Uniform(0.0, cfg.image_width - w);
    const double y1 = rng.Uniform(0.0, cfg.image_height - h);
    const Box box{io::ToStorage(x1), io::ToStorage(y1), io::ToStorage(x1 + w), io::ToStorage(y1 + h)};
    scene.ground_truth.objects.push_back({box, cat});

    const bool hard = rng.Uniform() < cfg.hard_fraction;
    scene.hard.push_back(hard);
    const double sigma = cfg.regional_noise * (hard ? cfg.hard_noise_multiplier : 1.0);
    std::vector<double> region = NoiseVector(rng, d, sigma);
    for (std::size_t k = 0; k < d; ++k) region[k] += world.prototypes(static_cast<std::size_t>(cat), k);
    const std::vector<double> probs = RegionSoftmax(L2Normalize(region).values, world.prototypes, cfg.temperature);

    std::vector<int> ranked(probs.size());
    std::iota(ranked.begin(), ranked.end(), 0);
    std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
      return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
    });
    DetectionInstance inst{box, {}};
    for (std::size_t r = 0; r < std::min(cfg.top_k, ranked.size()); ++r) {
      inst.scores.push_back({ranked[r], io::ToStorage(probs[static_cast<std::size_t>(ranked[r])])});
    }
    scene.detections.instances.push_back(std::move(inst));
  }

  // Teacher embedding: mean of present prototypes plus theme context.
  std::vector<double> ie(d, 0.0);
  for (int c : present) {
    for (std::size_t k = 0; k < d; ++k) ie[k] += world.prototypes(static_cast<std::size_t>(c), k);
  }
  const std::vector<double> teacher_noise = NoiseVector(rng, d, cfg.global_noise);
  for (std::size_t k = 0; k < d; ++k) {
    ie[k] = ie[k] / static_cast<double>(present.size()) + world.themes(scene.theme, k) + teacher_noise[k];
  }
  EmbeddingVector teacher = L2Normalize(ie);

  const std::vector<double> global_noise = NoiseVector(rng, D, cfg.global_noise);
  EmbeddingVector global;
  global.values.resize(D);
  for (std::size_t r = 0; r < D; ++r) {
    global.values[r] = io::ToStorage(Dot(world.lifting.row(r), teacher.values) + global_noise[r]);
  }
  for (double& v : teacher.values) v = io::ToStorage(v);

  scene.record.global_feature = std::move(global);
  scene.record.teacher_embedding = std::move(teacher);
  scene.record.labels.assign(present.begin(), present.end());
  return scene;
}

GeneratedDataset GenerateInMemory(const WorldConfig& cfg) {
  GeneratedDataset out{GenerateWorld(cfg), {}, {}};
  std::uint64_t stream = 0;
  auto fill = [&](SplitData& split, std::size_t count, const char* prefix, bool strip_novel) {
    for (std::size_t i = 0; i < count; ++i) {
      ++stream;
      SplitMix64 rng(cfg.seed ^ stream);
      Scene scene = GenerateScene(out.world, cfg, rng, ImageId(prefix, i));
      if (strip_novel) {
        std::erase_if(scene.record.labels, [&](int l) { return out.world.vocab.is_novel(l); });
      }
      split.records.push_back(std::move(scene.record));
      split.detections.push_back(std::move(scene.detections));
      split.ground_truth.push_back(std::move(scene.ground_truth));
      split.themes.push_back(scene.theme);
    }
  };
  fill(out.train, cfg.images_train, "train", true);
  fill(out.test, cfg.images_test, "test", false);
  return out;
}

void GenerateDataset(const WorldConfig& cfg, const std::filesystem::path& out_dir) {
  const GeneratedDataset data = GenerateInMemory(cfg);
  io::WriteDatasetRoot(out_dir, data.world.vocab, data.world.prototypes);
  io::WriteWorldConfig(out_dir / "world.json", cfg);
  io::WriteSplit(out_dir / "train", data.train.records, data.train.detections, data.train.ground_truth);
  io::WriteSplit(out_dir / "test", data.test.records, data.test.detections, data.test.ground_truth);
}

}  // namespace ctxfuse::synth
