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
#include <limits>
#include <numeric>
#include <vector>

#include "ctxfuse/core.hpp"
#include "doctest.h"
#include "support/test_util.hpp"

namespace ctxfuse {
namespace {

using testing::RandomVector;

template <typename Fn>
ErrorCode CodeOf(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an ctxfuse::Error");
  return ErrorCode::kInvalidArgument;
}

double Mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double PopulationSd(const std::vector<double>& v) {
  const double m = Mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / v.size());
}

TEST_CASE("l2 normalize") {
  const EmbeddingVector a = L2Normalize(std::vector<double>{3, 4});
  CHECK(a.unit);
  CHECK(a.values[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(a.values[1] == doctest::Approx(0.8).epsilon(1e-15));
  const EmbeddingVector b = L2Normalize(std::vector<double>{1, 0});
  CHECK(b.values == std::vector<double>{1, 0});
  CHECK(CodeOf([] { L2Normalize(std::vector<double>{0, 0}); }) == ErrorCode::kDegenerateVector);
}

TEST_CASE("cosine similarity") {
  CHECK(CosineSimilarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(CosineSimilarity(std::vector<double>{3, 4}, std::vector<double>{3, 4}) == doctest::Approx(1.0));
  CHECK(CosineSimilarity(std::vector<double>{1, 1}, std::vector<double>{1, 0}) ==
        doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(CodeOf([] { CosineSimilarity(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}); }) ==
        ErrorCode::kDimensionMismatch);
  CHECK(CodeOf([] { CosineSimilarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}); }) ==
        ErrorCode::kDegenerateVector);
}

TEST_CASE("cosine stays inside [-1, 1] for parallel vectors") {
  SplitMix64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> a = RandomVector(rng, 7, -1e3, 1e3);
    std::vector<double> b = a;
    for (double& x : b) x *= 3.7;
    const double c = CosineSimilarity(a, b);
    CHECK(c <= 1.0);
    std::vector<double> neg = a;
    for (double& x : neg) x = -x;
    CHECK(CosineSimilarity(a, neg) >= -1.0);
  }
}

TEST_CASE("zscore normalize") {
  const std::vector<double> z = ZScoreNormalize(std::vector<double>{1, 2, 3});
  CHECK(z[0] == doctest::Approx(-1.22474).epsilon(1e-4));
  CHECK(z[1] == doctest::Approx(0.0));
  CHECK(z[2] == doctest::Approx(1.22474).epsilon(1e-4));
  CHECK(ZScoreNormalize(std::vector<double>{5, 5, 5}) == std::vector<double>{0, 0, 0});
  const std::vector<double> two = ZScoreNormalize(std::vector<double>{2, 4});
  CHECK(two[0] == doctest::Approx(-1.0));
  CHECK(two[1] == doctest::Approx(1.0));
  CHECK(CodeOf([] { ZScoreNormalize(std::vector<double>{1}); }) == ErrorCode::kTooFewCategories);
}

TEST_CASE("zscore uses the population standard deviation") {
  SplitMix64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> z = ZScoreNormalize(RandomVector(rng, 2 + rng.Below(50)));
    CHECK(std::abs(Mean(z)) < 1e-12);
    CHECK(std::abs(PopulationSd(z) - 1.0) < 1e-12);
  }
}

TEST_CASE("stable sigmoid") {
  CHECK(StableSigmoid(0.0) == 0.5);
  CHECK(StableSigmoid(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-6));
  const double tiny = StableSigmoid(-745.0);
  CHECK(tiny > 0.0);
  CHECK(tiny < 1e-300);
  CHECK(StableSigmoid(1e3) == 1.0);
  CHECK(StableSigmoid(-1e3) >= 0.0);
  CHECK(!std::isnan(StableSigmoid(-1e3)));
}

TEST_CASE("region softmax") {
  const Matrix t(2, 2, {1, 0, 1, 0});
  const std::vector<double> eq = RegionSoftmax(std::vector<double>{0.3, 0.4}, t, 0.05);
  CHECK(eq[0] == doctest::Approx(0.5));
  CHECK(eq[1] == doctest::Approx(0.5));

  // Rows chosen so the cosines with e = [1, 0] are 0.2 and 0.1.
  const Matrix t2(2, 2, {0.2, std::sqrt(1 - 0.04), 0.1, std::sqrt(1 - 0.01)});
  const std::vector<double> p = RegionSoftmax(std::vector<double>{1, 0}, t2, 0.1);
  CHECK(p[0] == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(p[1] == doctest::Approx(0.26894).epsilon(1e-5));

  const Matrix t3(2, 2, {1, 0, 0, 1});
  const std::vector<double> q = RegionSoftmax(std::vector<double>{1, 0}, t3, 1.0);
  CHECK(q[0] == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(q[1] == doctest::Approx(0.26894).epsilon(1e-5));

  CHECK(CodeOf([&] { RegionSoftmax(std::vector<double>{1, 0}, t3, 0.0); }) == ErrorCode::kInvalidArgument);
  CHECK(CodeOf([&] { RegionSoftmax(std::vector<double>{1, 0, 0}, t3, 1.0); }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("region softmax sums to one for large vocabularies") {
  SplitMix64 rng(5);
  const std::size_t C = 10000;
  const Matrix t = testing::RandomMatrix(rng, C, 8);
  const std::vector<double> p = RegionSoftmax(RandomVector(rng, 8), t, 0.01);
  CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-9);
}

TEST_CASE("vocabulary validation") {
  CHECK_NOTHROW(testing::MakeVocab(2, 1));
  CHECK(CodeOf([] {
          CategoryVocabulary({{0, "a", Split::kBase, {}}, {2, "b", Split::kNovel, {}}});
        }) == ErrorCode::kFormat);
  CHECK(CodeOf([] {
          CategoryVocabulary({{0, "a", Split::kBase, {}}, {1, "a", Split::kNovel, {}}});
        }) == ErrorCode::kFormat);
  CHECK(CodeOf([] { CategoryVocabulary({{0, "", Split::kBase, {}}}); }) == ErrorCode::kFormat);
  CHECK(CodeOf([] { CategoryVocabulary({{0, "a", Split::kNovel, {}}}); }) == ErrorCode::kFormat);

  const CategoryVocabulary v = testing::MakeVocab(3, 2);
  CHECK(v.ids_in(Split::kBase) == std::vector<int>{0, 1, 2});
  CHECK(v.ids_in(Split::kNovel) == std::vector<int>{3, 4});
  CHECK(v.is_novel(4));
  CHECK_FALSE(v.is_valid_id(5));
  CHECK_FALSE(v.is_valid_id(-1));
}

TEST_CASE("box and record validation") {
  CHECK(IsValidBox({0, 0, 1, 1}));
  CHECK_FALSE(IsValidBox({1, 0, 1, 1}));
  CHECK_FALSE(IsValidBox({0, 0, std::numeric_limits<double>::infinity(), 1}));

  const CategoryVocabulary v = testing::MakeVocab(2, 1);
  DetectionSet d{"img", {{{0, 0, 1, 1}, {{0, 0.5}}}}};
  CHECK_NOTHROW(ValidateDetections(d, v));
  d.instances[0].scores[0].probability = 1.5;
  CHECK(CodeOf([&] { ValidateDetections(d, v); }) == ErrorCode::kFormat);
  d.instances[0].scores[0] = {7, 0.5};
  CHECK(CodeOf([&] { ValidateDetections(d, v); }) == ErrorCode::kInvalidLabel);

  GroundTruthSet g{"img", {{{0, 0, 1, 1}, 3}}};
  CHECK(CodeOf([&] { ValidateGroundTruth(g, v); }) == ErrorCode::kInvalidLabel);

  ImageRecord r;
  r.image_id = "img";
  r.global_feature.values = {1.0, 2.0};
  r.labels = {0, 9};
  CHECK(CodeOf([&] { ValidateRecord(r, v); }) == ErrorCode::kInvalidLabel);
}

TEST_CASE("fusion config validation") {
  FusionConfig cfg;
  CHECK_NOTHROW(cfg.Validate());
  cfg.gamma = 1.2;
  CHECK(CodeOf([&] { cfg.Validate(); }) == ErrorCode::kInvalidArgument);
  cfg = FusionConfig{};
  cfg.prob_floor = 0.0;
  CHECK(CodeOf([&] { cfg.Validate(); }) == ErrorCode::kInvalidArgument);
  cfg = FusionConfig{};
  cfg.temperature = -1.0;
  CHECK(CodeOf([&] { cfg.Validate(); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("name round trips") {
  CHECK(ParseVariant(VariantName(Variant::kVisualMlr)) == Variant::kVisualMlr);
  CHECK(ParseVariant(VariantName(Variant::kVisualMlrPlus)) == Variant::kVisualMlrPlus);
  CHECK(ParseVariant("visual_mlr_plus") == Variant::kVisualMlrPlus);
  CHECK(ParseSplit(SplitName(Split::kNovel)) == Split::kNovel);
  CHECK(ParseGroup(GroupName(FrequencyGroup::kCommon)) == FrequencyGroup::kCommon);
  CHECK(CodeOf([] { ParseVariant("mlr++"); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("error messages carry the code name") {
  try {
    Fail(ErrorCode::kBadMagic, "x");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "BadMagic: x");
  }
}

}  // namespace
}  // namespace ctxfuse
