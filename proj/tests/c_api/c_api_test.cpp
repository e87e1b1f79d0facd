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

// Uses only the public header and the shared library.

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "ctxfuse/ctxfuse.h"
#include "doctest.h"

namespace {

namespace fs = std::filesystem;

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("ctxfuse_capi_" + tag + "_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

ctxfuse_world_config SmallWorld() {
  ctxfuse_world_config w;
  ctxfuse_world_config_default(&w);
  w.images_train = 60;
  w.images_test = 30;
  w.seed = 5;
  return w;
}

ctxfuse_train_config QuickTrain() {
  ctxfuse_train_config t;
  ctxfuse_train_config_default(&t);
  t.iterations = 60;
  t.batch_size = 16;
  return t;
}

std::string ReportText(const ctxfuse_report* r) {
  size_t need = 0;
  CHECK(ctxfuse_report_text(r, nullptr, 0, &need) == CTXFUSE_ERR_BUFFER_TOO_SMALL);
  std::string s(need, '\0');
  CHECK(ctxfuse_report_text(r, s.data(), s.size(), &need) == CTXFUSE_OK);
  s.resize(need - 1);
  return s;
}

TEST_CASE("status names and version") {
  CHECK(std::string(ctxfuse_version()) == "1.0.0");
  CHECK(std::string(ctxfuse_status_name(CTXFUSE_OK)) == "Ok");
  CHECK(std::string(ctxfuse_status_name(CTXFUSE_ERR_BAD_MAGIC)) == "BadMagic");
  CHECK(std::string(ctxfuse_status_name(static_cast<ctxfuse_status>(1234))) == "Unknown");
}

TEST_CASE("defaults and presets") {
  ctxfuse_fusion_config f;
  REQUIRE(ctxfuse_fusion_config_preset(CTXFUSE_PRESET_COCO, &f) == CTXFUSE_OK);
  CHECK(f.lambda_base == 0.8);
  CHECK(f.lambda_novel == 0.5);
  CHECK(f.gamma == 0.7);
  CHECK(f.variant == CTXFUSE_VARIANT_MLR_PLUS);
  CHECK(f.prob_floor == 1e-12);
  REQUIRE(ctxfuse_fusion_config_preset(CTXFUSE_PRESET_LVIS, &f) == CTXFUSE_OK);
  CHECK(f.lambda_novel == 0.8);
  CHECK(f.gamma == 0.5);
  CHECK(ctxfuse_fusion_config_preset(CTXFUSE_PRESET_LVIS, nullptr) == CTXFUSE_ERR_INVALID_ARGUMENT);

  ctxfuse_train_config t;
  ctxfuse_train_config_default(&t);
  CHECK(t.learning_rate == 2e-4);
  CHECK(t.batch_size == 64);
  CHECK(t.loss_reduction == CTXFUSE_REDUCTION_MEAN_PAIRS);

  ctxfuse_world_config w;
  ctxfuse_world_config_default(&w);
  CHECK(w.n_categories == 40);
  CHECK(w.n_base == 30);
  CHECK(w.temperature == 0.05);
}

TEST_CASE("config files") {
  ScratchDir dir("cfg");
  std::ofstream(dir / "w.json") << "{\"seed\": 9, \"images_test\": 3}";
  ctxfuse_world_config w;
  REQUIRE(ctxfuse_world_config_load((dir / "w.json").c_str(), &w) == CTXFUSE_OK);
  CHECK(w.seed == 9);
  CHECK(w.images_test == 3);
  CHECK(w.n_categories == 40);

  std::ofstream(dir / "t.json") << "{\"learning_rate\": \"fast\"}";
  ctxfuse_train_config t;
  CHECK(ctxfuse_train_config_load((dir / "t.json").c_str(), &t) == CTXFUSE_ERR_FORMAT);
  CHECK(std::strlen(ctxfuse_last_error()) > 0);
  CHECK(ctxfuse_train_config_load((dir / "missing.json").c_str(), &t) == CTXFUSE_ERR_IO);
}

TEST_CASE("primitives") {
  const double a[] = {1, 1}, b[] = {1, 0};
  double c = 0;
  REQUIRE(ctxfuse_cosine_similarity(a, b, 2, &c) == CTXFUSE_OK);
  CHECK(std::abs(c - 0.70711) < 1e-5);
  const double zero[] = {0, 0};
  CHECK(ctxfuse_cosine_similarity(zero, b, 2, &c) == CTXFUSE_ERR_DEGENERATE_VECTOR);
  CHECK(std::string(ctxfuse_last_error()).find("DegenerateVector") != std::string::npos);

  const double s[] = {1, 2, 3};
  double z[3];
  REQUIRE(ctxfuse_zscore_normalize(s, 3, z) == CTXFUSE_OK);
  CHECK(std::abs(z[0] + 1.22474) < 1e-4);
  CHECK(ctxfuse_zscore_normalize(s, 1, z) == CTXFUSE_ERR_TOO_FEW_CATEGORIES);
  double p[3];
  REQUIRE(ctxfuse_branch_probs(s, 3, p) == CTXFUSE_OK);
  CHECK(std::abs(p[2] - 0.77293) < 1e-4);

  ctxfuse_fusion_config cfg;
  ctxfuse_fusion_config_preset(CTXFUSE_PRESET_LVIS, &cfg);
  const double pt[] = {0.5, 0.25}, pi[] = {0.5, 0.81};
  const uint8_t novel[] = {0, 1};
  double out[2];
  REQUIRE(ctxfuse_ensemble_mmlr(pt, pi, novel, 2, &cfg, out) == CTXFUSE_OK);
  CHECK(std::abs(out[0] - 0.5) < 1e-12);
  CHECK(std::abs(out[1] - 0.6403) < 1e-3);
  const uint8_t all_novel[] = {1, 1};
  CHECK(ctxfuse_ensemble_mmlr(pt, pi, all_novel, 2, &cfg, out) == CTXFUSE_ERR_INVALID_ARGUMENT);

  double r = 0;
  REQUIRE(ctxfuse_refine_score(0.9, 0.4, 0.5, 1e-12, &r) == CTXFUSE_OK);
  CHECK(std::abs(r - 0.6) < 1e-15);
  REQUIRE(ctxfuse_refine_score(0.9, 0.4, 0.0, 1e-12, &r) == CTXFUSE_OK);
  CHECK(r == 0.4);
  CHECK(ctxfuse_refine_score(0.9, 0.4, 2.0, 1e-12, &r) == CTXFUSE_ERR_INVALID_ARGUMENT);
}

TEST_CASE("tensor handles") {
  ScratchDir dir("tensor");
  const float data[] = {1, 2, 3, 4, 5, 6};
  const uint64_t dims[] = {2, 3};
  REQUIRE(ctxfuse_tensor_write((dir / "t.sict").c_str(), data, dims, 2) == CTXFUSE_OK);
  ctxfuse_tensor* t = nullptr;
  REQUIRE(ctxfuse_tensor_read((dir / "t.sict").c_str(), &t) == CTXFUSE_OK);
  CHECK(ctxfuse_tensor_ndim(t) == 2);
  CHECK(ctxfuse_tensor_dim(t, 1) == 3);
  CHECK(ctxfuse_tensor_size(t) == 6);
  CHECK(std::memcmp(ctxfuse_tensor_data(t), data, sizeof(data)) == 0);
  ctxfuse_tensor_free(t);
  ctxfuse_tensor_free(nullptr);

  std::ofstream(dir / "bad.sict", std::ios::binary) << "XXXXjunkjunkjunk";
  t = nullptr;
  CHECK(ctxfuse_tensor_read((dir / "bad.sict").c_str(), &t) == CTXFUSE_ERR_BAD_MAGIC);
  CHECK(t == nullptr);
}

TEST_CASE("pipeline through the C interface") {
  ScratchDir dir("pipe");
  const ctxfuse_world_config w = SmallWorld();
  REQUIRE(ctxfuse_synth(&w, (dir / "data").c_str()) == CTXFUSE_OK);
  REQUIRE(ctxfuse_validate_dataset((dir / "data").c_str()) == CTXFUSE_OK);

  const ctxfuse_train_config t = QuickTrain();
  double loss = -1;
  REQUIRE(ctxfuse_train((dir / "data").c_str(), CTXFUSE_BRANCH_TEXT, &t, (dir / "text").c_str(), &loss) ==
          CTXFUSE_OK);
  CHECK(std::isfinite(loss));
  CHECK(loss >= 0);
  REQUIRE(ctxfuse_train((dir / "data").c_str(), CTXFUSE_BRANCH_IMAGE, &t, (dir / "image").c_str(), nullptr) ==
          CTXFUSE_OK);

  ctxfuse_head* head = nullptr;
  REQUIRE(ctxfuse_head_load((dir / "text").c_str(), &head) == CTXFUSE_OK);
  CHECK(ctxfuse_head_input_dim(head) == w.global_dim);
  CHECK(ctxfuse_head_output_dim(head) == w.embed_dim);
  std::vector<double> x(w.global_dim, 0.1), e(w.embed_dim);
  CHECK(ctxfuse_head_project(head, x.data(), x.size(), e.data(), e.size()) == CTXFUSE_OK);
  CHECK(ctxfuse_head_project(head, x.data(), 3, e.data(), e.size()) == CTXFUSE_ERR_DIMENSION_MISMATCH);
  ctxfuse_head_free(head);

  ctxfuse_fusion_config cfg;
  ctxfuse_fusion_config_preset(CTXFUSE_PRESET_LVIS, &cfg);
  cfg.variant = CTXFUSE_VARIANT_MLR;
  CHECK(ctxfuse_score((dir / "data").c_str(), "test", (dir / "text").c_str(), nullptr, &cfg,
                      (dir / "bad_scores").c_str()) == CTXFUSE_ERR_MISSING_HEAD);
  REQUIRE(ctxfuse_score((dir / "data").c_str(), "test", (dir / "text").c_str(), (dir / "image").c_str(), &cfg,
                        (dir / "scores").c_str()) == CTXFUSE_OK);
  ctxfuse_fusion_config stored;
  REQUIRE(ctxfuse_scores_config((dir / "scores").c_str(), &stored) == CTXFUSE_OK);
  CHECK(stored.variant == CTXFUSE_VARIANT_MLR);
  CHECK(stored.gamma == 0.5);

  REQUIRE(ctxfuse_fuse((dir / "data").c_str(), "test", (dir / "scores").c_str(), nullptr, &stored,
                       (dir / "fused").c_str()) == CTXFUSE_OK);
  ctxfuse_fusion_config wrong = stored;
  wrong.variant = CTXFUSE_VARIANT_MLR_PLUS;
  CHECK(ctxfuse_fuse((dir / "data").c_str(), "test", (dir / "scores").c_str(), nullptr, &wrong,
                     (dir / "fused2").c_str()) == CTXFUSE_ERR_INVALID_ARGUMENT);

  ctxfuse_report* raw = nullptr;
  ctxfuse_report* fused = nullptr;
  REQUIRE(ctxfuse_evaluate((dir / "data").c_str(), "test", nullptr, (dir / "scores").c_str(), 10, &raw) ==
          CTXFUSE_OK);
  REQUIRE(ctxfuse_evaluate((dir / "data").c_str(), "test", (dir / "fused/detections.jsonl").c_str(), nullptr, 10,
                           &fused) == CTXFUSE_OK);
  double v = 0;
  int present = 0;
  REQUIRE(ctxfuse_report_metric(raw, "r_mlr_novel", &v, &present) == CTXFUSE_OK);
  CHECK(present == 1);
  CHECK(v >= 0.0);
  CHECK(v <= 1.0);
  REQUIRE(ctxfuse_report_metric(fused, "r_mlr_novel", &v, &present) == CTXFUSE_OK);
  CHECK(present == 0);
  REQUIRE(ctxfuse_report_metric(fused, "images", &v, &present) == CTXFUSE_OK);
  CHECK(v == 30.0);
  CHECK(ctxfuse_report_metric(fused, "ap_everything", &v, &present) == CTXFUSE_ERR_INVALID_ARGUMENT);

  const std::string text = ReportText(fused);
  CHECK(text.rfind("ap_all ", 0) == 0);
  char tiny[8];
  size_t need = 0;
  CHECK(ctxfuse_report_json(fused, tiny, sizeof(tiny), &need) == CTXFUSE_ERR_BUFFER_TOO_SMALL);
  CHECK(need > sizeof(tiny));
  CHECK(tiny[7] == '\0');
  REQUIRE(ctxfuse_report_write(fused, (dir / "report").c_str()) == CTXFUSE_OK);
  CHECK(fs::exists(dir / "report/report.json"));
  ctxfuse_report_free(raw);
  ctxfuse_report_free(fused);

  const ctxfuse_sweep_param params[] = {CTXFUSE_SWEEP_GAMMA, CTXFUSE_SWEEP_LAMBDA_NOVEL};
  ctxfuse_sweep_result* sweep = nullptr;
  REQUIRE(ctxfuse_sweep((dir / "data").c_str(), "test", (dir / "scores").c_str(), &stored, params, 2, &sweep) ==
          CTXFUSE_OK);
  CHECK(ctxfuse_sweep_rows(sweep) == 7 + 6);
  ctxfuse_sweep_param which;
  double value = 0, ap_all = 0, ap_novel = 0, ap_base = 0;
  REQUIRE(ctxfuse_sweep_row(sweep, 0, &which, &value, &ap_all, &ap_novel, &ap_base) == CTXFUSE_OK);
  CHECK(which == CTXFUSE_SWEEP_GAMMA);
  CHECK(std::abs(value - 0.3) < 1e-12);
  REQUIRE(ctxfuse_sweep_row(sweep, 12, &which, &value, &ap_all, &ap_novel, &ap_base) == CTXFUSE_OK);
  CHECK(which == CTXFUSE_SWEEP_LAMBDA_NOVEL);
  CHECK(std::abs(value - 1.0) < 1e-12);
  CHECK(ctxfuse_sweep_row(sweep, 13, &which, &value, &ap_all, &ap_novel, &ap_base) == CTXFUSE_ERR_INVALID_ARGUMENT);
  REQUIRE(ctxfuse_sweep_write(sweep, (dir / "sweep.tsv").c_str()) == CTXFUSE_OK);
  CHECK(fs::file_size(dir / "sweep.tsv") > 0);
  ctxfuse_sweep_free(sweep);
}

TEST_CASE("gradcheck") {
  double err = 1, kink = 0;
  REQUIRE(ctxfuse_gradcheck(CTXFUSE_LOSS_RANK, 0, 1e-5, &err, &kink) == CTXFUSE_OK);
  CHECK(err < 1e-4);
  CHECK(kink > 0);
  REQUIRE(ctxfuse_gradcheck(CTXFUSE_LOSS_DIST, 1, 1e-5, &err, nullptr) == CTXFUSE_OK);
  CHECK(err < 1e-4);
  CHECK(ctxfuse_gradcheck(CTXFUSE_LOSS_DIST, 1, 0.0, &err, nullptr) == CTXFUSE_ERR_INVALID_ARGUMENT);
}

TEST_CASE("null arguments are rejected") {
  CHECK(ctxfuse_synth(nullptr, "x") == CTXFUSE_ERR_INVALID_ARGUMENT);
  CHECK(ctxfuse_validate_dataset(nullptr) == CTXFUSE_ERR_INVALID_ARGUMENT);
  CHECK(ctxfuse_validate_dataset("/nonexistent/ctxfuse") == CTXFUSE_ERR_IO);
  ctxfuse_report* r = nullptr;
  CHECK(ctxfuse_evaluate(nullptr, "test", nullptr, nullptr, 10, &r) == CTXFUSE_ERR_INVALID_ARGUMENT);
}

}  // namespace
