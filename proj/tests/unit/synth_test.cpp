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

#include <cmath>
#include <numeric>
#include <vector>

#include "ctxfuse/io.hpp"
#include "ctxfuse/synth.hpp"
#include "doctest.h"
#include "support/test_util.hpp"

namespace ctxfuse::synth {
namespace {

double Pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Residual norm of v after projecting onto span(rows) via Gram-Schmidt.
double SpanResidual(const std::vector<double>& v, std::vector<std::vector<double>> rows) {
  std::vector<std::vector<double>> basis;
  for (auto& r : rows) {
    for (const auto& b : basis) {
      const double c = Dot(r, b);
      for (std::size_t k = 0; k < r.size(); ++k) r[k] -= c * b[k];
    }
    const double n = Norm(r);
    if (n < 1e-10) continue;
    for (double& x : r) x /= n;
    basis.push_back(r);
  }
  std::vector<double> res = v;
  for (const auto& b : basis) {
    const double c = Dot(res, b);
    for (std::size_t k = 0; k < res.size(); ++k) res[k] -= c * b[k];
  }
  return Norm(res);
}

TEST_CASE("world generation") {
  const WorldConfig cfg;
  const SyntheticWorld a = GenerateWorld(cfg);
  const SyntheticWorld b = GenerateWorld(cfg);
  CHECK(a.prototypes == b.prototypes);
  CHECK(a.themes == b.themes);
  CHECK(a.theme_table == b.theme_table);
  CHECK(a.lifting == b.lifting);
  CHECK(a.vocab == b.vocab);

  CHECK(a.prototypes.rows() == cfg.n_categories);
  CHECK(a.lifting.rows() == cfg.global_dim);
  for (std::size_t c = 0; c < cfg.n_categories; ++c) CHECK(std::abs(Norm(a.prototypes.row(c)) - 1.0) < 1e-6);
  for (std::size_t t = 0; t < cfg.n_themes; ++t) {
    auto row = a.theme_table.row(t);
    CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) < 1e-9);
    CHECK(std::abs(Norm(a.themes.row(t)) - 1.0) < 1e-12);
  }
  CHECK(a.vocab.ids_in(Split::kNovel).front() == static_cast<int>(cfg.n_base));
  CHECK(a.vocab.ids_in(Split::kNovel).size() == cfg.n_categories - cfg.n_base);

  WorldConfig other = cfg;
  other.seed = 1;
  CHECK(GenerateWorld(other).prototypes != a.prototypes);
}

TEST_CASE("config validation") {
  WorldConfig cfg;
  cfg.n_base = cfg.n_categories;
  CHECK_THROWS_AS(GenerateWorld(cfg), Error);
  cfg = WorldConfig{};
  cfg.regional_noise = -1;
  CHECK_THROWS_AS(GenerateWorld(cfg), Error);
  cfg = WorldConfig{};
  cfg.hard_noise_multiplier = 1.0;
  CHECK_THROWS_AS(GenerateWorld(cfg), Error);
  cfg = WorldConfig{};
  cfg.embed_dim = 0;
  CHECK_THROWS_AS(GenerateWorld(cfg), Error);
}

TEST_CASE("single theme") {
  WorldConfig cfg;
  cfg.n_themes = 1;
  cfg.images_train = 20;
  cfg.images_test = 20;
  const GeneratedDataset d = GenerateInMemory(cfg);
  for (std::size_t t : d.train.themes) CHECK(t == 0);
  for (std::size_t t : d.test.themes) CHECK(t == 0);
}

TEST_CASE("noiseless scenes put the true category first") {
  WorldConfig cfg;
  cfg.regional_noise = 0.0;
  cfg.hard_fraction = 0.0;
  const SyntheticWorld world = GenerateWorld(cfg);
  SplitMix64 rng(99);
  for (int i = 0; i < 50; ++i) {
    const Scene s = GenerateScene(world, cfg, rng, "x");
    REQUIRE(s.detections.instances.size() == s.ground_truth.objects.size());
    for (std::size_t o = 0; o < s.ground_truth.objects.size(); ++o) {
      CHECK(s.detections.instances[o].scores.front().category_id == s.ground_truth.objects[o].category_id);
    }
  }
}

TEST_CASE("scene structure") {
  const WorldConfig cfg;
  const SyntheticWorld world = GenerateWorld(cfg);
  SplitMix64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const Scene s = GenerateScene(world, cfg, rng, "img");
    const std::size_t n = s.ground_truth.objects.size();
    CHECK(n >= cfg.objects_min);
    CHECK(n <= cfg.objects_max);
    CHECK(s.detections.instances.size() == n);
    CHECK(s.hard.size() == n);
    for (std::size_t o = 0; o < n; ++o) {
      const auto& inst = s.detections.instances[o];
      CHECK(inst.box == s.ground_truth.objects[o].box);
      CHECK(IsValidBox(inst.box));
      CHECK(inst.box[2] <= cfg.image_width);
      CHECK(inst.box[3] <= cfg.image_height);
      CHECK(inst.scores.size() == cfg.top_k);
      double sum = 0.0;
      for (std::size_t k = 0; k < inst.scores.size(); ++k) {
        sum += inst.scores[k].probability;
        if (k > 0) CHECK(inst.scores[k].probability <= inst.scores[k - 1].probability);
      }
      CHECK(sum <= 1.0 + 1e-9);
    }
    CHECK(std::is_sorted(s.record.labels.begin(), s.record.labels.end()));
    CHECK(std::abs(Norm(s.record.teacher_embedding->values) - 1.0) < 1e-6);
    CHECK(s.record.global_feature.dim() == cfg.global_dim);
  }
}

TEST_CASE("without global noise the teacher lies in the span of its sources") {
  WorldConfig cfg;
  cfg.global_noise = 0.0;
  const SyntheticWorld world = GenerateWorld(cfg);
  SplitMix64 rng(8);
  for (int i = 0; i < 30; ++i) {
    const Scene s = GenerateScene(world, cfg, rng, "x");
    std::vector<std::vector<double>> sources;
    for (int c : s.record.labels) {
      auto row = world.prototypes.row(static_cast<std::size_t>(c));
      sources.emplace_back(row.begin(), row.end());
    }
    auto theme = world.themes.row(s.theme);
    sources.emplace_back(theme.begin(), theme.end());
    CHECK(SpanResidual(s.record.teacher_embedding->values, sources) < 1e-6);
    CHECK(std::abs(Norm(s.record.teacher_embedding->values) - 1.0) < 1e-6);
  }
}

TEST_CASE("hard objects score lower than easy ones") {
  const WorldConfig cfg;
  const SyntheticWorld world = GenerateWorld(cfg);
  SplitMix64 rng(17);
  double hard_sum = 0, easy_sum = 0;
  std::size_t hard_n = 0, easy_n = 0;
  while (hard_n + easy_n < 1000) {
    const Scene s = GenerateScene(world, cfg, rng, "x");
    for (std::size_t o = 0; o < s.ground_truth.objects.size(); ++o) {
      double p = 0.0;
      for (const auto& sc : s.detections.instances[o].scores) {
        if (sc.category_id == s.ground_truth.objects[o].category_id) p = sc.probability;
      }
      (s.hard[o] ? hard_sum : easy_sum) += p;
      ++(s.hard[o] ? hard_n : easy_n);
    }
  }
  REQUIRE(hard_n > 0);
  REQUIRE(easy_n > 0);
  CHECK(hard_sum / hard_n < easy_sum / easy_n);
}

TEST_CASE("dataset splits") {
  const WorldConfig cfg;
  const GeneratedDataset d = GenerateInMemory(cfg);
  CHECK(d.train.records.size() == cfg.images_train);
  CHECK(d.test.records.size() == cfg.images_test);
  for (const auto& r : d.train.records) {
    for (int l : r.labels) CHECK_FALSE(d.world.vocab.is_novel(l));
  }
  bool any_novel = false;
  for (const auto& r : d.test.records) {
    for (int l : r.labels) any_novel |= d.world.vocab.is_novel(l);
  }
  CHECK(any_novel);

  // Image streams: train images first, 1-based, xor-ed into the seed.
  SplitMix64 rng(cfg.seed ^ (cfg.images_train + 3));
  const Scene third = GenerateScene(d.world, cfg, rng, "test_000002");
  CHECK(third.record.global_feature.values == d.test.records[2].global_feature.values);
  CHECK(third.record.labels == d.test.records[2].labels);
}

TEST_CASE("theme co-occurrence tracks the theme table") {
  const WorldConfig cfg;
  const GeneratedDataset d = GenerateInMemory(cfg);
  Matrix counts(cfg.n_themes, cfg.n_categories);
  for (std::size_t i = 0; i < d.test.ground_truth.size(); ++i) {
    for (const auto& obj : d.test.ground_truth[i].objects) {
      counts(d.test.themes[i], static_cast<std::size_t>(obj.category_id)) += 1.0;
    }
  }
  for (std::size_t t = 0; t < cfg.n_themes; ++t) {
    auto row = counts.row(t);
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    REQUIRE(total > 0);
    for (double& v : row) v /= total;
  }
  CHECK(Pearson(counts.data(), d.world.theme_table.data()) > 0.9);
}

TEST_CASE("dataset on disk is byte-identical across runs") {
  WorldConfig cfg;
  cfg.images_train = 30;
  cfg.images_test = 20;
  cfg.seed = 7;
  testing::TempDir a("synth_a"), b("synth_b");
  GenerateDataset(cfg, a.path());
  GenerateDataset(cfg, b.path());
  const auto ta = testing::SnapshotTree(a.path());
  CHECK(ta == testing::SnapshotTree(b.path()));
  CHECK(ta.contains("vocab.json"));
  CHECK(ta.contains("text_embeddings.sict"));
  CHECK(ta.contains("test/detections.jsonl"));
  CHECK_NOTHROW(io::ValidateDataset(a.path()));
  CHECK(io::ReadWorldConfig(a / "world.json") == cfg);
}

}  // namespace
}  // namespace ctxfuse::synth
