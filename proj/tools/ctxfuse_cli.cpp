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

// Command-line front end. Talks to the library only through the C API.
//
// Exit codes: 0 success, 1 usage error, 2 data or validation error.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctxfuse/ctxfuse.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

// Thrown once a C call has failed; carries the exit code.
struct CallFailed {
  int exit_code;
};

void Check(ctxfuse_status status) {
  if (status == CTXFUSE_OK) return;
  std::fprintf(stderr, "error: %s\n", ctxfuse_last_error());
  throw CallFailed{kExitData};
}

template <typename Handle, typename Fn>
std::string FetchText(const Handle* h, Fn fn) {
  size_t required = 0;
  const ctxfuse_status probe = fn(h, nullptr, 0, &required);
  if (probe != CTXFUSE_ERR_BUFFER_TOO_SMALL) Check(probe);
  std::string text(required, '\0');
  Check(fn(h, text.data(), text.size(), &required));
  text.resize(required - 1);
  return text;
}

const char* OrNull(const std::optional<std::string>& s) { return s ? s->c_str() : nullptr; }

// Fusion flags shared by score, fuse and sweep.
struct FusionFlags {
  std::optional<std::string> preset;
  std::optional<double> gamma;
  std::optional<double> lambda_base;
  std::optional<double> lambda_novel;
  std::optional<std::string> variant;

  void Register(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "Hyperparameter preset")->check(CLI::IsMember({"lvis", "coco"}));
    cmd->add_option("--gamma", gamma, "Refinement weight of the MLR score")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--lambda-base", lambda_base, "Text-branch weight on base categories")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--lambda-novel", lambda_novel, "Image-branch weight on novel categories")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--variant", variant, "Image branch: learned head or teacher embedding")
        ->check(CLI::IsMember({"mlr", "mlr-plus"}));
  }

  // Preset values replace all three weights; single flags override after.
  ctxfuse_fusion_config Apply(ctxfuse_fusion_config cfg) const {
    if (preset) {
      ctxfuse_fusion_config p;
      Check(ctxfuse_fusion_config_preset(*preset == "coco" ? CTXFUSE_PRESET_COCO : CTXFUSE_PRESET_LVIS, &p));
      cfg.lambda_base = p.lambda_base;
      cfg.lambda_novel = p.lambda_novel;
      cfg.gamma = p.gamma;
    }
    if (gamma) cfg.gamma = *gamma;
    if (lambda_base) cfg.lambda_base = *lambda_base;
    if (lambda_novel) cfg.lambda_novel = *lambda_novel;
    if (variant) cfg.variant = *variant == "mlr" ? CTXFUSE_VARIANT_MLR : CTXFUSE_VARIANT_MLR_PLUS;
    return cfg;
  }
};

ctxfuse_fusion_config LvisDefaults() {
  ctxfuse_fusion_config cfg;
  Check(ctxfuse_fusion_config_preset(CTXFUSE_PRESET_LVIS, &cfg));
  return cfg;
}

std::string Fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctxfuse: context-aware score refinement for open-vocabulary detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ctxfuse_version()));

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::optional<std::string> synth_config;
  std::optional<std::uint64_t> synth_seed;
  std::string synth_out;
  synth->add_option("--config", synth_config, "World configuration (JSON)")->check(CLI::ExistingFile);
  synth->add_option("--seed", synth_seed, "Generator seed (overrides the config)");
  synth->add_option("--out", synth_out, "Output dataset directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Fit a text or image head on the train split");
  std::string train_data, train_out, train_branch = "text";
  std::optional<std::string> train_config;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--branch", train_branch, "Head to train")->check(CLI::IsMember({"text", "image"}));
  train->add_option("--config", train_config, "Training configuration (JSON)")->check(CLI::ExistingFile);
  train->add_option("--seed", train_seed, "Training seed (overrides the config)");
  train->add_option("--out", train_out, "Output head directory")->required();

  // score
  auto* score = app.add_subcommand("score", "Compute image-level MLR scores for a split");
  std::string score_data, score_split = "test", score_text_head, score_out;
  std::optional<std::string> score_image_head;
  FusionFlags score_flags;
  score->add_option("--data", score_data, "Dataset directory")->required();
  score->add_option("--split", score_split, "Split to score")->check(CLI::IsMember({"train", "test"}));
  score->add_option("--text-head", score_text_head, "Trained text head directory")->required();
  score->add_option("--image-head", score_image_head, "Trained image head directory (mlr variant)");
  score_flags.Register(score);
  score->add_option("--out", score_out, "Output scores directory")->required();

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Refine detector scores with MLR scores");
  std::string fuse_data, fuse_split = "test", fuse_scores, fuse_out;
  std::optional<std::string> fuse_detections;
  FusionFlags fuse_flags;
  fuse->add_option("--data", fuse_data, "Dataset directory")->required();
  fuse->add_option("--split", fuse_split, "Split to refine")->check(CLI::IsMember({"train", "test"}));
  fuse->add_option("--scores", fuse_scores, "Scores directory from `score`")->required();
  fuse->add_option("--detections", fuse_detections, "Detections to refine (default: the split's detections)");
  fuse_flags.Register(fuse);
  fuse->add_option("--out", fuse_out, "Output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Box AP and MLR recall report");
  std::string eval_data, eval_split = "test";
  std::optional<std::string> eval_detections, eval_scores, eval_out;
  std::size_t eval_k = 10;
  eval->add_option("--data", eval_data, "Dataset directory")->required();
  eval->add_option("--split", eval_split, "Split to evaluate")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--detections", eval_detections, "Detections to evaluate (default: the split's detections)");
  eval->add_option("--scores", eval_scores, "Scores directory; adds recall@k");
  eval->add_option("--k", eval_k, "Top-k for MLR recall")->check(CLI::PositiveNumber);
  eval->add_option("--out", eval_out, "Write report.txt and report.json here");

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients");
  std::string grad_loss = "all";
  std::uint64_t grad_seed = 0;
  std::uint64_t grad_count = 1;
  double grad_h = 1e-5;
  grad->add_option("--loss", grad_loss, "Loss to check")->check(CLI::IsMember({"rank", "dist", "all"}));
  grad->add_option("--seed", grad_seed, "First instance seed");
  grad->add_option("--count", grad_count, "Number of consecutive seeds")->check(CLI::PositiveNumber);
  grad->add_option("--step", grad_h, "Central-difference step")->check(CLI::PositiveNumber);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "One-at-a-time grid over gamma and the lambdas");
  std::string sweep_data, sweep_split = "test", sweep_scores, sweep_param = "all";
  std::optional<std::string> sweep_out;
  FusionFlags sweep_flags;
  sweep->add_option("--data", sweep_data, "Dataset directory")->required();
  sweep->add_option("--split", sweep_split, "Split to evaluate")->check(CLI::IsMember({"train", "test"}));
  sweep->add_option("--scores", sweep_scores, "Scores directory from `score`")->required();
  sweep->add_option("--param", sweep_param, "Parameter to vary")
      ->check(CLI::IsMember({"gamma", "lambda-base", "lambda-novel", "all"}));
  sweep_flags.Register(sweep);
  sweep->add_option("--out", sweep_out, "Write sweep.tsv here");

  // validate
  auto* validate = app.add_subcommand("validate", "Check every file of a dataset directory");
  std::string validate_data;
  validate->add_option("--data", validate_data, "Dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      ctxfuse_world_config cfg;
      ctxfuse_world_config_default(&cfg);
      if (synth_config) Check(ctxfuse_world_config_load(synth_config->c_str(), &cfg));
      if (synth_seed) cfg.seed = *synth_seed;
      Check(ctxfuse_synth(&cfg, synth_out.c_str()));
      std::printf("wrote %s (seed %llu)\n", synth_out.c_str(), static_cast<unsigned long long>(cfg.seed));
    } else if (train->parsed()) {
      ctxfuse_train_config cfg;
      ctxfuse_train_config_default(&cfg);
      if (train_config) Check(ctxfuse_train_config_load(train_config->c_str(), &cfg));
      if (train_seed) cfg.seed = *train_seed;
      double final_loss = 0.0;
      Check(ctxfuse_train(train_data.c_str(), train_branch == "text" ? CTXFUSE_BRANCH_TEXT : CTXFUSE_BRANCH_IMAGE,
                          &cfg, train_out.c_str(), &final_loss));
      std::printf("branch %s\nfinal_loss %s\n", train_branch.c_str(), Fmt(final_loss).c_str());
    } else if (score->parsed()) {
      const ctxfuse_fusion_config cfg = score_flags.Apply(LvisDefaults());
      Check(ctxfuse_score(score_data.c_str(), score_split.c_str(), score_text_head.c_str(),
                          OrNull(score_image_head), &cfg, score_out.c_str()));
      std::printf("wrote %s\n", score_out.c_str());
    } else if (fuse->parsed()) {
      ctxfuse_fusion_config stored;
      Check(ctxfuse_scores_config(fuse_scores.c_str(), &stored));
      const ctxfuse_fusion_config cfg = fuse_flags.Apply(stored);
      Check(ctxfuse_fuse(fuse_data.c_str(), fuse_split.c_str(), fuse_scores.c_str(), OrNull(fuse_detections), &cfg,
                         fuse_out.c_str()));
      std::printf("wrote %s\n", (std::filesystem::path(fuse_out) / "detections.jsonl").string().c_str());
    } else if (eval->parsed()) {
      ctxfuse_report* report = nullptr;
      Check(ctxfuse_evaluate(eval_data.c_str(), eval_split.c_str(), OrNull(eval_detections), OrNull(eval_scores),
                             eval_k, &report));
      std::unique_ptr<ctxfuse_report, decltype(&ctxfuse_report_free)> guard(report, &ctxfuse_report_free);
      if (eval_out) Check(ctxfuse_report_write(report, eval_out->c_str()));
      std::fputs(FetchText(report, ctxfuse_report_text).c_str(), stdout);
    } else if (grad->parsed()) {
      std::vector<std::pair<std::string, ctxfuse_loss_kind>> kinds;
      if (grad_loss != "dist") kinds.emplace_back("rank", CTXFUSE_LOSS_RANK);
      if (grad_loss != "rank") kinds.emplace_back("dist", CTXFUSE_LOSS_DIST);
      for (const auto& [name, kind] : kinds) {
        double worst = 0.0;
        for (std::uint64_t i = 0; i < grad_count; ++i) {
          double err = 0.0, kink = 0.0;
          Check(ctxfuse_gradcheck(kind, grad_seed + i, grad_h, &err, &kink));
          std::printf("%s seed %llu max_rel_error %.3e kink_distance %.3e\n", name.c_str(),
                      static_cast<unsigned long long>(grad_seed + i), err, kink);
          worst = std::max(worst, err);
        }
        std::printf("%s max_rel_error %.3e\n", name.c_str(), worst);
      }
    } else if (sweep->parsed()) {
      ctxfuse_fusion_config stored;
      Check(ctxfuse_scores_config(sweep_scores.c_str(), &stored));
      const ctxfuse_fusion_config cfg = sweep_flags.Apply(stored);
      std::vector<ctxfuse_sweep_param> params;
      if (sweep_param == "gamma" || sweep_param == "all") params.push_back(CTXFUSE_SWEEP_GAMMA);
      if (sweep_param == "lambda-base" || sweep_param == "all") params.push_back(CTXFUSE_SWEEP_LAMBDA_BASE);
      if (sweep_param == "lambda-novel" || sweep_param == "all") params.push_back(CTXFUSE_SWEEP_LAMBDA_NOVEL);
      ctxfuse_sweep_result* result = nullptr;
      Check(ctxfuse_sweep(sweep_data.c_str(), sweep_split.c_str(), sweep_scores.c_str(), &cfg, params.data(),
                          params.size(), &result));
      std::unique_ptr<ctxfuse_sweep_result, decltype(&ctxfuse_sweep_free)> guard(result, &ctxfuse_sweep_free);
      if (sweep_out) {
        Check(ctxfuse_sweep_write(result, (std::filesystem::path(*sweep_out) / "sweep.tsv").string().c_str()));
      }
      std::fputs(FetchText(result, ctxfuse_sweep_text).c_str(), stdout);
    } else if (validate->parsed()) {
      Check(ctxfuse_validate_dataset(validate_data.c_str()));
      std::printf("ok %s\n", validate_data.c_str());
    }
  } catch (const CallFailed& f) {
    return f.exit_code;
  }
  return 0;
}
