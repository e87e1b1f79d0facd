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

#include <algorithm>
#include <cmath>
#include <string>

#include "ctxfuse/io.hpp"
#include "ctxfuse/pipeline.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support/cli_runner.hpp"
#include "support/test_util.hpp"

namespace ctxfuse {
namespace {

using testing::RunCli;
using testing::TempDir;

synth::WorldConfig SmallWorld(std::uint64_t seed) {
  synth::WorldConfig cfg;
  cfg.images_train = 120;
  cfg.images_test = 60;
  cfg.seed = seed;
  return cfg;
}

mlr::TrainConfig ShortTraining() {
  mlr::TrainConfig cfg;
  cfg.iterations = 150;
  cfg.batch_size = 32;
  cfg.learning_rate = 5e-3;
  return cfg;
}

void WriteTrainConfig(const std::filesystem::path& path, const mlr::TrainConfig& c) {
  const nlohmann::json doc{{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
                           {"batch_size", c.batch_size},       {"iterations", c.iterations},
                           {"seed", c.seed}};
  testing::Spit(path, doc.dump());
}

void RequireOk(const testing::CliResult& r) {
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
}

// synth -> train (both heads) -> score -> fuse -> eval under root.
void RunPipeline(const std::filesystem::path& root, const std::filesystem::path& world_json,
                 const std::filesystem::path& train_json, const std::string& variant) {
  const std::string data = (root / "data").string();
  RequireOk(RunCli({"synth", "--config", world_json.string(), "--out", data}));
  RequireOk(RunCli({"train", "--data", data, "--branch", "text", "--config", train_json.string(), "--out",
                    (root / "text_head").string()}));
  RequireOk(RunCli({"train", "--data", data, "--branch", "image", "--config", train_json.string(), "--out",
                    (root / "image_head").string()}));
  RequireOk(RunCli({"score", "--data", data, "--text-head", (root / "text_head").string(), "--image-head",
                    (root / "image_head").string(), "--variant", variant, "--out", (root / "scores").string()}));
  RequireOk(RunCli({"fuse", "--data", data, "--scores", (root / "scores").string(), "--out",
                    (root / "fused").string()}));
  RequireOk(RunCli({"eval", "--data", data, "--detections", (root / "fused" / "detections.jsonl").string(),
                    "--scores", (root / "scores").string(), "--out", (root / "report").string()}));
  RequireOk(RunCli({"eval", "--data", data, "--out", (root / "raw_report").string()}));
}

void CheckClose(const nlohmann::json& cli, const std::optional<double>& expected, const char* key) {
  CAPTURE(key);
  REQUIRE(cli.contains(key) == expected.has_value());
  if (expected) CHECK(std::abs(cli[key].get<double>() - *expected) <= 1e-9);
}

TEST_CASE("synth is byte-identical across runs") {
  TempDir a("cli_synth_a"), b("cli_synth_b");
  const auto r1 = RunCli({"synth", "--seed", "7", "--out", a.path().string()});
  const auto r2 = RunCli({"synth", "--seed", "7", "--out", b.path().string()});
  RequireOk(r1);
  RequireOk(r2);
  CHECK(r1.out.find("seed 7") != std::string::npos);
  const auto ta = testing::SnapshotTree(a.path());
  CHECK(ta == testing::SnapshotTree(b.path()));
  CHECK(ta.size() == 13);
  RequireOk(RunCli({"validate", "--data", a.path().string()}));
}

TEST_CASE("full pipeline is deterministic and matches the in-process composition") {
  TempDir a("cli_pipe_a"), b("cli_pipe_b"), cfg_dir("cli_pipe_cfg");
  const synth::WorldConfig world = SmallWorld(3);
  const mlr::TrainConfig train = ShortTraining();
  io::WriteWorldConfig(cfg_dir / "world.json", world);
  WriteTrainConfig(cfg_dir / "train.json", train);

  RunPipeline(a.path(), cfg_dir / "world.json", cfg_dir / "train.json", "mlr");
  RunPipeline(b.path(), cfg_dir / "world.json", cfg_dir / "train.json", "mlr");
  CHECK(testing::SnapshotTree(a.path()) == testing::SnapshotTree(b.path()));

  FusionConfig fusion;
  fusion.variant = Variant::kVisualMlr;
  const pipeline::BenchmarkResult in_process = pipeline::RunInProcessBenchmark(world, train, train, fusion);

  const auto fused = nlohmann::json::parse(testing::Slurp(a / "report/report.json"));
  const auto raw = nlohmann::json::parse(testing::Slurp(a / "raw_report/report.json"));
  for (const auto& [json_doc, report] : {std::pair{&fused, &in_process.fused}, std::pair{&raw, &in_process.raw}}) {
    CheckClose(*json_doc, report->ap_all, "ap_all");
    CheckClose(*json_doc, report->ap_novel, "ap_novel");
    CheckClose(*json_doc, report->ap_base, "ap_base");
    CHECK((*json_doc)["counts"]["detections"].get<std::size_t>() == report->num_detections);
    CHECK((*json_doc)["per_category_ap"].size() == report->per_category_ap.size());
  }
  CheckClose(fused, in_process.fused.r_mlr_novel, "r_mlr_novel");
  CheckClose(fused, in_process.fused.r_mlr_base, "r_mlr_base");

  // The text report on stdout agrees with report.txt.
  const auto r = RunCli({"eval", "--data", (a / "data").string(), "--detections",
                         (a / "fused/detections.jsonl").string(), "--scores", (a / "scores").string()});
  RequireOk(r);
  CHECK(r.out == testing::Slurp(a / "report/report.txt"));
}

TEST_CASE("fuse with gamma 0 returns the detector scores") {
  TempDir root("cli_gamma0"), cfg_dir("cli_gamma0_cfg");
  io::WriteWorldConfig(cfg_dir / "world.json", SmallWorld(4));
  mlr::TrainConfig train = ShortTraining();
  train.iterations = 20;
  WriteTrainConfig(cfg_dir / "train.json", train);
  const std::string data = (root / "data").string();
  RequireOk(RunCli({"synth", "--config", (cfg_dir / "world.json").string(), "--out", data}));
  RequireOk(RunCli({"train", "--data", data, "--branch", "text", "--config", (cfg_dir / "train.json").string(),
                    "--out", (root / "head").string()}));
  RequireOk(RunCli({"score", "--data", data, "--text-head", (root / "head").string(), "--out",
                    (root / "scores").string()}));
  RequireOk(RunCli({"fuse", "--data", data, "--scores", (root / "scores").string(), "--gamma", "0", "--out",
                    (root / "fused").string()}));

  const auto before = io::ReadDetections(root / "data/test/detections.jsonl");
  const auto after = io::ReadDetections(root / "fused/detections.jsonl");
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    REQUIRE(before[i].instances.size() == after[i].instances.size());
    for (std::size_t j = 0; j < before[i].instances.size(); ++j) {
      const auto& x = before[i].instances[j];
      const auto& y = after[i].instances[j];
      CHECK(x.box == y.box);
      REQUIRE(x.scores.size() == y.scores.size());
      for (std::size_t k = 0; k < x.scores.size(); ++k) {
        CHECK(x.scores[k].category_id == y.scores[k].category_id);
        CHECK(std::abs(x.scores[k].probability - y.scores[k].probability) <= 1e-12);
      }
    }
  }
}

TEST_CASE("eval on a noiseless world is perfect") {
  TempDir root("cli_noiseless");
  synth::WorldConfig world = SmallWorld(11);
  world.regional_noise = 0.0;
  world.hard_fraction = 0.0;
  io::WriteWorldConfig(root / "world.json", world);
  const std::string data = (root / "data").string();
  RequireOk(RunCli({"synth", "--config", (root / "world.json").string(), "--out", data}));
  RequireOk(RunCli({"eval", "--data", data, "--out", (root / "report").string()}));
  const auto report = nlohmann::json::parse(testing::Slurp(root / "report/report.json"));
  CHECK(report["ap_all"].get<double>() == 1.0);
  CHECK(report["ap_novel"].get<double>() == 1.0);
  CHECK(report["ap_base"].get<double>() == 1.0);
}

TEST_CASE("gradcheck subcommand") {
  const auto r = RunCli({"gradcheck", "--seed", "0", "--count", "3"});
  RequireOk(r);
  CHECK(r.out.find("rank max_rel_error") != std::string::npos);
  CHECK(r.out.find("dist max_rel_error") != std::string::npos);
  CHECK(RunCli({"gradcheck", "--step", "0"}).exit_code == 1);
}

TEST_CASE("sweep subcommand") {
  TempDir root("cli_sweep");
  io::WriteWorldConfig(root / "world.json", SmallWorld(2));
  mlr::TrainConfig train = ShortTraining();
  train.iterations = 20;
  WriteTrainConfig(root / "train.json", train);
  const std::string data = (root / "data").string();
  RequireOk(RunCli({"synth", "--config", (root / "world.json").string(), "--out", data}));
  RequireOk(RunCli({"train", "--data", data, "--branch", "text", "--config", (root / "train.json").string(),
                    "--out", (root / "head").string()}));
  RequireOk(RunCli({"score", "--data", data, "--text-head", (root / "head").string(), "--out",
                    (root / "scores").string()}));
  const auto r = RunCli({"sweep", "--data", data, "--scores", (root / "scores").string(), "--param", "gamma",
                         "--out", (root / "sweep").string()});
  RequireOk(r);
  // Header plus seven gamma rows.
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 8);
}

TEST_CASE("exit codes") {
  TempDir root("cli_exit");
  CHECK(RunCli({}).exit_code == 1);
  CHECK(RunCli({"frobnicate"}).exit_code == 1);
  CHECK(RunCli({"synth"}).exit_code == 1);
  CHECK(RunCli({"score", "--data", "x", "--text-head", "y", "--out", "z", "--gamma", "1.5"}).exit_code == 1);

  const auto missing = RunCli({"eval", "--data", (root / "nope").string()});
  CHECK(missing.exit_code == 2);
  CHECK(missing.err.find("error:") != std::string::npos);

  testing::Spit(root / "bad.json", R"({"n_categories": 40, "colour": "blue"})");
  CHECK(RunCli({"synth", "--config", (root / "bad.json").string(), "--out", (root / "d").string()}).exit_code == 2);

  const auto version = RunCli({"--version"});
  CHECK(version.exit_code == 0);
  CHECK(version.out.find("1.0.0") != std::string::npos);
}

}  // namespace
}  // namespace ctxfuse
