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

// Seeded synthetic benchmark. Latent scene themes induce category
// co-occurrence; "hard" objects get heavily corrupted regional embeddings
// while the image-level teacher embedding still sees every object, so
// image-level context can recover what the region scorer misses.
//
// Stream layout: the world is drawn from splitmix64(seed); image i (1-based,
// train images first, then test) is drawn from splitmix64(seed ^ i).

#ifndef CTXFUSE_SYNTH_HPP_
#define CTXFUSE_SYNTH_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ctxfuse/core.hpp"
#include "ctxfuse/random.hpp"

namespace ctxfuse::synth {

struct WorldConfig {
  std::size_t n_categories = 40;
  std::size_t n_base = 30;
  std::size_t n_themes = 5;
  std::size_t embed_dim = 32;
  std::size_t global_dim = 64;
  std::size_t images_train = 500;
  std::size_t images_test = 200;
  std::size_t objects_min = 3;
  std::size_t objects_max = 8;
  double hard_fraction = 0.3;
  // Noise magnitudes are vector norms: noise = magnitude * g / sqrt(dim)
  // with g standard normal.
  double regional_noise = 1.5;
  double hard_noise_multiplier = 3.0;
  double global_noise = 0.5;
  double temperature = 0.05;
  std::size_t top_k = 5;
  double image_width = 640.0;
  double image_height = 480.0;
  std::uint64_t seed = 0;

  void Validate() const;
  bool operator==(const WorldConfig&) const = default;
};

struct SyntheticWorld {
  CategoryVocabulary vocab;
  Matrix prototypes;   // C x d, unit rows; doubles as the text-embedding table
  Matrix themes;       // T x d, unit rows
  Matrix theme_table;  // T x C, rows sum to 1
  Matrix lifting;      // D x d
};

SyntheticWorld GenerateWorld(const WorldConfig& cfg);

struct Scene {
  ImageRecord record;
  GroundTruthSet ground_truth;
  DetectionSet detections;
  std::size_t theme = 0;
  std::vector<bool> hard;  // per ground-truth object
};

// Values in the returned scene are rounded to 32-bit storage precision.
Scene GenerateScene(const SyntheticWorld& world, const WorldConfig& cfg, SplitMix64& rng, const std::string& image_id);

struct SplitData {
  std::vector<ImageRecord> records;
  std::vector<DetectionSet> detections;
  std::vector<GroundTruthSet> ground_truth;
  std::vector<std::size_t> themes;
};

struct GeneratedDataset {
  SyntheticWorld world;
  SplitData train;  // novel labels stripped from records
  SplitData test;
};

GeneratedDataset GenerateInMemory(const WorldConfig& cfg);

// Writes vocab.json, text_embeddings.sict, world.json and one directory per
// split (images.jsonl, global.sict, teacher.sict, detections.jsonl,
// groundtruth.jsonl).
void GenerateDataset(const WorldConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace ctxfuse::synth

#endif  // CTXFUSE_SYNTH_HPP_
