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

#include "ctxfuse/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace ctxfuse::eval {
namespace {

double Area(const Box& b) { return std::max(0.0, b[2] - b[0]) * std::max(0.0, b[3] - b[1]); }

std::optional<double> Mean(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double Iou(const Box& a, const Box& b) {
  const double area_a = Area(a);
  const double area_b = Area(b);
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double iw = std::min(a[2], b[2]) - std::max(a[0], b[0]);
  const double ih = std::min(a[3], b[3]) - std::max(a[1], b[1]);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (area_a + area_b - inter);
}

MatchResult MatchDetections(std::span<const CategoryDetection> dets, const GroundTruthIndex& gts,
                            double iou_threshold) {
  MatchResult result;
  std::unordered_map<std::string, std::vector<bool>> used;
  for (const auto& [image_id, boxes] : gts) {
    result.num_gt += boxes.size();
    used[image_id].assign(boxes.size(), false);
  }
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  result.is_tp.reserve(dets.size());
  for (std::size_t idx : order) {
    const CategoryDetection& det = dets[idx];
    const auto it = gts.find(det.image_id);
    bool tp = false;
    if (it != gts.end()) {
      std::vector<bool>& taken = used[det.image_id];
      double best_iou = iou_threshold;
      std::ptrdiff_t best = -1;
      for (std::size_t g = 0; g < it->second.size(); ++g) {
        if (taken[g]) continue;
        const double v = Iou(det.box, it->second[g]);
        if (v >= best_iou && (best < 0 || v > best_iou)) {
          best_iou = v;
          best = static_cast<std::ptrdiff_t>(g);
        }
      }
      if (best >= 0) {
        taken[static_cast<std::size_t>(best)] = true;
        tp = true;
      }
    }
    result.is_tp.push_back(tp);
  }
  return result;
}

std::optional<double> AveragePrecision(const std::vector<bool>& ranked_is_tp, std::size_t num_gt) {
  if (num_gt == 0) return std::nullopt;
  const std::size_t n = ranked_is_tp.size();
  std::vector<std::size_t> tp_count(n);
  std::vector<double> envelope(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += ranked_is_tp[k] ? 1 : 0;
    tp_count[k] = tp;
    envelope[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  for (std::size_t k = n; k-- > 1;) envelope[k - 1] = std::max(envelope[k - 1], envelope[k]);

  // Recall grid j/100; recall_k >= j/100  <=>  100 * tp_k >= j * num_gt.
  double total = 0.0;
  std::size_t k = 0;
  for (std::size_t j = 0; j <= 100; ++j) {
    while (k < n && 100 * tp_count[k] < j * num_gt) ++k;
    if (k == n) break;
    total += envelope[k];
  }
  return total / 101.0;
}

EvalReport MapReport(std::span<const DetectionSet> dets, std::span<const GroundTruthSet> gts,
                     const CategoryVocabulary& vocab, double iou_threshold) {
  EvalReport report;
  const std::size_t num_cat = vocab.size();
  std::vector<GroundTruthIndex> gt_by_cat(num_cat);
  std::vector<std::string> image_ids;
  for (const auto& g : gts) {
    ValidateGroundTruth(g, vocab);
    image_ids.push_back(g.image_id);
    for (auto& index : gt_by_cat) index.try_emplace(g.image_id);
    for (const auto& obj : g.objects) {
      gt_by_cat[static_cast<std::size_t>(obj.category_id)][g.image_id].push_back(obj.box);
      ++report.num_gt_objects;
    }
  }
  std::sort(image_ids.begin(), image_ids.end());
  if (std::adjacent_find(image_ids.begin(), image_ids.end()) != image_ids.end()) {
    Fail(ErrorCode::kFormat, "duplicate image id in ground truth");
  }
  report.num_images = image_ids.size();

  // Images are visited in id order so that score ties resolve independently
  // of the caller's image ordering.
  std::vector<const DetectionSet*> det_order;
  for (const auto& d : dets) {
    if (!std::binary_search(image_ids.begin(), image_ids.end(), d.image_id)) {
      Fail(ErrorCode::kUnknownImage, "detections reference unknown image '" + d.image_id + "'");
    }
    ValidateDetections(d, vocab);
    det_order.push_back(&d);
  }
  std::stable_sort(det_order.begin(), det_order.end(),
                   [](const DetectionSet* a, const DetectionSet* b) { return a->image_id < b->image_id; });

  std::vector<std::vector<CategoryDetection>> per_cat(num_cat);
  for (const DetectionSet* d : det_order) {
    for (const auto& inst : d->instances) {
      ++report.num_detections;
      for (const auto& sc : inst.scores) {
        per_cat[static_cast<std::size_t>(sc.category_id)].push_back({d->image_id, inst.box, sc.probability});
      }
    }
  }

  std::vector<double> all, novel, base, rare, common, frequent;
  for (std::size_t c = 0; c < num_cat; ++c) {
    const MatchResult m = MatchDetections(per_cat[c], gt_by_cat[c], iou_threshold);
    const std::optional<double> ap = AveragePrecision(m.is_tp, m.num_gt);
    if (!ap) continue;
    report.per_category_ap[static_cast<int>(c)] = *ap;
    all.push_back(*ap);
    (vocab[c].split == Split::kNovel ? novel : base).push_back(*ap);
    if (vocab[c].group) {
      switch (*vocab[c].group) {
        case FrequencyGroup::kRare: rare.push_back(*ap); break;
        case FrequencyGroup::kCommon: common.push_back(*ap); break;
        case FrequencyGroup::kFrequent: frequent.push_back(*ap); break;
      }
    }
  }
  report.ap_all = Mean(all);
  report.ap_novel = Mean(novel);
  report.ap_base = Mean(base);
  report.ap_rare = Mean(rare);
  report.ap_common = Mean(common);
  report.ap_frequent = Mean(frequent);
  return report;
}

RecallAtK RecallAtTopK(std::span<const MlrScores> scores, std::span<const ImageRecord> records,
                       const CategoryVocabulary& vocab, std::size_t k) {
  if (k == 0) Fail(ErrorCode::kInvalidArgument, "k must be at least 1");
  std::unordered_map<std::string, const MlrScores*> by_id;
  for (const auto& s : scores) by_id[s.image_id] = &s;

  std::size_t hit_novel = 0, total_novel = 0, hit_base = 0, total_base = 0;
  std::vector<int> order(vocab.size());
  for (const auto& rec : records) {
    const auto it = by_id.find(rec.image_id);
    if (it == by_id.end()) Fail(ErrorCode::kUnknownImage, "no MLR scores for image '" + rec.image_id + "'");
    const std::vector<double>& p = it->second->prob_mmlr;
    if (p.size() != vocab.size()) Fail(ErrorCode::kDimensionMismatch, "prob_mmlr length differs from vocabulary");
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return p[static_cast<std::size_t>(a)] > p[static_cast<std::size_t>(b)];
    });
    std::vector<bool> in_top(vocab.size(), false);
    for (std::size_t r = 0; r < std::min(k, order.size()); ++r) in_top[static_cast<std::size_t>(order[r])] = true;
    for (int label : rec.labels) {
      if (!vocab.is_valid_id(label)) Fail(ErrorCode::kInvalidLabel, "label " + std::to_string(label));
      const bool hit = in_top[static_cast<std::size_t>(label)];
      if (vocab.is_novel(label)) {
        ++total_novel;
        hit_novel += hit ? 1 : 0;
      } else {
        ++total_base;
        hit_base += hit ? 1 : 0;
      }
    }
  }
  RecallAtK out;
  if (total_novel > 0) out.novel = static_cast<double>(hit_novel) / static_cast<double>(total_novel);
  if (total_base > 0) out.base = static_cast<double>(hit_base) / static_cast<double>(total_base);
  return out;
}

std::string FormatReport(const EvalReport& report, const CategoryVocabulary& vocab) {
  std::ostringstream os;
  auto line = [&](const char* key, const std::optional<double>& v) {
    if (!v) return;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    os << key << ' ' << buf << '\n';
  };
  line("ap_all", report.ap_all);
  line("ap_novel", report.ap_novel);
  line("ap_base", report.ap_base);
  line("ap_rare", report.ap_rare);
  line("ap_common", report.ap_common);
  line("ap_frequent", report.ap_frequent);
  line("r_mlr_novel", report.r_mlr_novel);
  line("r_mlr_base", report.r_mlr_base);
  os << "images " << report.num_images << '\n';
  os << "detections " << report.num_detections << '\n';
  os << "gt_objects " << report.num_gt_objects << '\n';
  for (const auto& [id, ap] : report.per_category_ap) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", ap);
    os << "ap/" << vocab[static_cast<std::size_t>(id)].name << ' ' << buf << '\n';
  }
  return os.str();
}

}  // namespace ctxfuse::eval
