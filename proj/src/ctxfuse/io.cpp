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

#include "ctxfuse/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace ctxfuse::io {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'I', 'C', 'T'};

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void PutU64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t Get(int width, const char* what) {
    if (bytes_.size() - pos_ < static_cast<std::size_t>(width)) {
      Fail(ErrorCode::kTruncatedPayload, std::string("tensor header ends inside ") + what);
    }
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

json BoxToJson(const Box& b) { return json::array({b[0], b[1], b[2], b[3]}); }

Box BoxFromJson(const json& j) {
  if (!j.is_array() || j.size() != 4) Fail(ErrorCode::kFormat, "box must be an array of 4 numbers");
  Box b{};
  for (std::size_t i = 0; i < 4; ++i) b[i] = j.at(i).get<double>();
  return b;
}

template <typename Fn>
void ForEachJsonLine(const fs::path& path, Fn fn) {
  std::istringstream in(ReadText(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      Fail(ErrorCode::kFormat, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string JsonLines(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

json ParseJsonDocument(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    Fail(ErrorCode::kFormat, what + ": " + e.what());
  }
}

json TrainConfigToJson(const mlr::TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate}, {"beta1", c.beta1},
              {"beta2", c.beta2},                 {"epsilon", c.epsilon},
              {"weight_decay", c.weight_decay},   {"batch_size", c.batch_size},
              {"iterations", c.iterations},       {"seed", c.seed},
              {"loss_reduction", mlr::ReductionName(c.loss_reduction)}};
}

Matrix MatrixFromRows(const Tensor& t, const fs::path& path) {
  if (t.dims.size() != 2) Fail(ErrorCode::kFormat, path.string() + ": expected a 2-D tensor");
  Matrix m(static_cast<std::size_t>(t.dims[0]), static_cast<std::size_t>(t.dims[1]));
  for (std::size_t i = 0; i < t.values.size(); ++i) m.data()[i] = static_cast<double>(t.values[i]);
  return m;
}

}  // namespace

std::string EncodeTensor(const Tensor& tensor) {
  std::uint64_t count = 1;
  for (auto d : tensor.dims) count *= d;
  if (count != tensor.values.size()) Fail(ErrorCode::kDimensionMismatch, "tensor values do not match dims");
  std::string out(kMagic, 4);
  PutU32(out, kTensorVersion);
  PutU32(out, kDtypeFloat32);
  PutU32(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) PutU64(out, d);
  out.reserve(out.size() + 4 * tensor.values.size());
  for (float v : tensor.values) PutU32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor DecodeTensor(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    Fail(ErrorCode::kBadMagic, "not a tensor file (bad magic)");
  }
  ByteReader r(bytes.substr(4));
  const auto version = r.Get(4, "version");
  if (version != kTensorVersion) Fail(ErrorCode::kBadVersion, "unsupported tensor version " + std::to_string(version));
  const auto dtype = r.Get(4, "dtype");
  if (dtype != kDtypeFloat32) Fail(ErrorCode::kBadDtype, "unsupported tensor dtype " + std::to_string(dtype));
  const auto ndim = r.Get(4, "ndim");
  if (ndim > r.remaining() / 8) Fail(ErrorCode::kTruncatedPayload, "tensor header ends inside dims");
  Tensor t;
  std::uint64_t count = 1;
  for (std::uint64_t i = 0; i < ndim; ++i) {
    const std::uint64_t d = r.Get(8, "dims");
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / d) {
      Fail(ErrorCode::kDimOverflow, "tensor element count overflows");
    }
    count *= d;
    t.dims.push_back(d);
  }
  const std::uint64_t payload = count * 4;
  if (r.remaining() < payload) {
    Fail(ErrorCode::kTruncatedPayload, "payload holds " + std::to_string(r.remaining()) + " bytes, dims need " +
                                           std::to_string(payload));
  }
  if (r.remaining() > payload) Fail(ErrorCode::kFormat, "trailing bytes after tensor payload");
  t.values.resize(static_cast<std::size_t>(count));
  for (auto& v : t.values) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.Get(4, "payload")));
  return t;
}

void WriteTensor(const fs::path& path, const Tensor& tensor) { WriteText(path, EncodeTensor(tensor)); }

Tensor ReadTensor(const fs::path& path) {
  try {
    return DecodeTensor(ReadText(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void WriteMatrix(const fs::path& path, const Matrix& m) {
  Tensor t{{m.rows(), m.cols()}, {}};
  t.values.reserve(m.size());
  for (double v : m.data()) t.values.push_back(static_cast<float>(v));
  WriteTensor(path, t);
}

Matrix ReadMatrix(const fs::path& path) { return MatrixFromRows(ReadTensor(path), path); }

double ToStorage(double v) { return static_cast<double>(static_cast<float>(v)); }

void RoundToStorage(std::vector<double>& values) {
  for (double& v : values) v = ToStorage(v);
}

void RoundToStorage(Matrix& m) { RoundToStorage(m.data()); }

std::string ReadText(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteText(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) Fail(ErrorCode::kIo, "cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) Fail(ErrorCode::kIo, "short write to " + path.string());
}

CategoryVocabulary ReadVocabulary(const fs::path& path) {
  const json doc = ParseJsonDocument(ReadText(path), path.string());
  std::vector<Category> cats;
  try {
    for (const auto& c : doc.at("categories")) {
      Category cat;
      cat.id = c.at("id").get<int>();
      cat.name = c.at("name").get<std::string>();
      cat.split = ParseSplit(c.at("split").get<std::string>());
      if (c.contains("group") && !c.at("group").is_null()) cat.group = ParseGroup(c.at("group").get<std::string>());
      cats.push_back(std::move(cat));
    }
  } catch (const json::exception& e) {
    Fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  return CategoryVocabulary(std::move(cats));
}

void WriteVocabulary(const fs::path& path, const CategoryVocabulary& vocab) {
  json cats = json::array();
  for (const auto& c : vocab.categories()) {
    json j{{"id", c.id}, {"name", c.name}, {"split", SplitName(c.split)}};
    if (c.group) j["group"] = GroupName(*c.group);
    cats.push_back(std::move(j));
  }
  WriteText(path, json{{"categories", cats}}.dump(2) + "\n");
}

std::vector<DetectionSet> ReadDetections(const fs::path& path) {
  std::vector<DetectionSet> out;
  ForEachJsonLine(path, [&](const json& j) {
    DetectionSet d;
    d.image_id = j.at("image_id").get<std::string>();
    for (const auto& inst : j.at("instances")) {
      DetectionInstance di{BoxFromJson(inst.at("box")), {}};
      for (const auto& pair : inst.at("scores")) {
        if (!pair.is_array() || pair.size() != 2) Fail(ErrorCode::kFormat, "score entries are [category_id, p]");
        di.scores.push_back({pair.at(0).get<int>(), pair.at(1).get<double>()});
      }
      d.instances.push_back(std::move(di));
    }
    out.push_back(std::move(d));
  });
  return out;
}

void WriteDetections(const fs::path& path, std::span<const DetectionSet> dets) {
  std::vector<json> rows;
  for (const auto& d : dets) {
    json insts = json::array();
    for (const auto& inst : d.instances) {
      json scores = json::array();
      for (const auto& sc : inst.scores) scores.push_back(json::array({sc.category_id, sc.probability}));
      insts.push_back(json{{"box", BoxToJson(inst.box)}, {"scores", scores}});
    }
    rows.push_back(json{{"image_id", d.image_id}, {"instances", insts}});
  }
  WriteText(path, JsonLines(rows));
}

std::vector<GroundTruthSet> ReadGroundTruth(const fs::path& path) {
  std::vector<GroundTruthSet> out;
  ForEachJsonLine(path, [&](const json& j) {
    GroundTruthSet g;
    g.image_id = j.at("image_id").get<std::string>();
    for (const auto& obj : j.at("objects")) {
      g.objects.push_back({BoxFromJson(obj.at("box")), obj.at("category_id").get<int>()});
    }
    out.push_back(std::move(g));
  });
  return out;
}

void WriteGroundTruth(const fs::path& path, std::span<const GroundTruthSet> gts) {
  std::vector<json> rows;
  for (const auto& g : gts) {
    json objs = json::array();
    for (const auto& o : g.objects) objs.push_back(json{{"box", BoxToJson(o.box)}, {"category_id", o.category_id}});
    rows.push_back(json{{"image_id", g.image_id}, {"objects", objs}});
  }
  WriteText(path, JsonLines(rows));
}

void WriteDatasetRoot(const fs::path& root, const CategoryVocabulary& vocab, const Matrix& text_embeds) {
  WriteVocabulary(root / "vocab.json", vocab);
  WriteMatrix(root / "text_embeddings.sict", text_embeds);
}

void WriteSplit(const fs::path& dir, std::span<const ImageRecord> records, std::span<const DetectionSet> dets,
                std::span<const GroundTruthSet> gts) {
  std::vector<json> rows;
  const std::size_t global_dim = records.empty() ? 0 : records.front().global_feature.dim();
  std::size_t teacher_dim = 0;
  for (const auto& r : records) {
    if (r.teacher_embedding) teacher_dim = r.teacher_embedding->dim();
  }
  Matrix global(records.size(), global_dim);
  std::vector<double> teacher_values;
  std::size_t teacher_rows = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ImageRecord& r = records[i];
    if (r.global_feature.dim() != global_dim) Fail(ErrorCode::kDimensionMismatch, "global feature dims differ");
    std::copy(r.global_feature.values.begin(), r.global_feature.values.end(), global.row(i).begin());
    json row{{"image_id", r.image_id}, {"labels", r.labels}, {"global_row", i}, {"teacher_row", nullptr}};
    if (r.teacher_embedding) {
      if (r.teacher_embedding->dim() != teacher_dim) Fail(ErrorCode::kDimensionMismatch, "teacher dims differ");
      row["teacher_row"] = teacher_rows++;
      teacher_values.insert(teacher_values.end(), r.teacher_embedding->values.begin(),
                            r.teacher_embedding->values.end());
    }
    if (r.width) row["width"] = *r.width;
    if (r.height) row["height"] = *r.height;
    rows.push_back(std::move(row));
  }
  WriteText(dir / "images.jsonl", JsonLines(rows));
  WriteMatrix(dir / "global.sict", global);
  if (teacher_rows > 0) WriteMatrix(dir / "teacher.sict", Matrix(teacher_rows, teacher_dim, std::move(teacher_values)));
  WriteDetections(dir / "detections.jsonl", dets);
  WriteGroundTruth(dir / "groundtruth.jsonl", gts);
}

std::vector<ImageRecord> ReadRecords(const fs::path& split_dir) {
  const Matrix global = ReadMatrix(split_dir / "global.sict");
  std::optional<Matrix> teacher;
  if (fs::exists(split_dir / "teacher.sict")) teacher = ReadMatrix(split_dir / "teacher.sict");

  std::vector<ImageRecord> records;
  ForEachJsonLine(split_dir / "images.jsonl", [&](const json& j) {
    ImageRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.labels = j.at("labels").get<std::vector<int>>();
    std::sort(r.labels.begin(), r.labels.end());
    r.labels.erase(std::unique(r.labels.begin(), r.labels.end()), r.labels.end());
    const auto grow = j.at("global_row").get<long long>();
    if (grow < 0 || static_cast<std::size_t>(grow) >= global.rows()) {
      Fail(ErrorCode::kFormat, "global_row " + std::to_string(grow) + " out of range for " + r.image_id);
    }
    const auto g = global.row(static_cast<std::size_t>(grow));
    r.global_feature.values.assign(g.begin(), g.end());
    if (j.contains("teacher_row") && !j.at("teacher_row").is_null()) {
      const auto trow = j.at("teacher_row").get<long long>();
      if (!teacher || trow < 0 || static_cast<std::size_t>(trow) >= teacher->rows()) {
        Fail(ErrorCode::kFormat, "teacher_row " + std::to_string(trow) + " out of range for " + r.image_id);
      }
      const auto t = teacher->row(static_cast<std::size_t>(trow));
      r.teacher_embedding = EmbeddingVector{{t.begin(), t.end()}, false};
    }
    if (j.contains("width")) r.width = j.at("width").get<int>();
    if (j.contains("height")) r.height = j.at("height").get<int>();
    records.push_back(std::move(r));
  });
  return records;
}

SplitFiles ReadSplit(const fs::path& split_dir) {
  return {ReadRecords(split_dir), ReadDetections(split_dir / "detections.jsonl"),
          ReadGroundTruth(split_dir / "groundtruth.jsonl")};
}

Dataset ReadDatasetRoot(const fs::path& root) {
  Dataset ds{ReadVocabulary(root / "vocab.json"), ReadMatrix(root / "text_embeddings.sict")};
  if (ds.text_embeds.rows() != ds.vocab.size()) {
    Fail(ErrorCode::kFormat, "text_embeddings.sict has " + std::to_string(ds.text_embeds.rows()) + " rows for " +
                                 std::to_string(ds.vocab.size()) + " categories");
  }
  return ds;
}

void ValidateDataset(const fs::path& root) {
  const Dataset ds = ReadDatasetRoot(root);
  for (double v : ds.text_embeds.data()) {
    if (!std::isfinite(v)) Fail(ErrorCode::kFormat, "non-finite text embedding");
  }
  for (const char* split : {"train", "test"}) {
    const fs::path dir = root / split;
    if (!fs::exists(dir)) continue;
    const SplitFiles files = ReadSplit(dir);
    std::unordered_set<std::string> ids;
    for (const auto& r : files.records) {
      if (!ids.insert(r.image_id).second) Fail(ErrorCode::kFormat, "duplicate image id " + r.image_id);
      ValidateRecord(r, ds.vocab);
      if (r.teacher_embedding && r.teacher_embedding->dim() != ds.text_embeds.cols()) {
        Fail(ErrorCode::kDimensionMismatch, "teacher embedding of " + r.image_id + " differs from text dim");
      }
    }
    for (const auto& d : files.detections) {
      if (!ids.contains(d.image_id)) Fail(ErrorCode::kUnknownImage, "detections for unknown image " + d.image_id);
      ValidateDetections(d, ds.vocab);
    }
    for (const auto& g : files.ground_truth) {
      if (!ids.contains(g.image_id)) Fail(ErrorCode::kUnknownImage, "ground truth for unknown image " + g.image_id);
      ValidateGroundTruth(g, ds.vocab);
    }
  }
}

synth::WorldConfig ParseWorldConfig(std::string_view json_text) {
  const json doc = ParseJsonDocument(json_text, "world config");
  if (!doc.is_object()) Fail(ErrorCode::kFormat, "world config must be a JSON object");
  synth::WorldConfig c;
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "n_categories") c.n_categories = v.get<std::size_t>();
      else if (key == "n_base") c.n_base = v.get<std::size_t>();
      else if (key == "n_themes") c.n_themes = v.get<std::size_t>();
      else if (key == "embed_dim") c.embed_dim = v.get<std::size_t>();
      else if (key == "global_dim") c.global_dim = v.get<std::size_t>();
      else if (key == "images_train") c.images_train = v.get<std::size_t>();
      else if (key == "images_test") c.images_test = v.get<std::size_t>();
      else if (key == "objects_min") c.objects_min = v.get<std::size_t>();
      else if (key == "objects_max") c.objects_max = v.get<std::size_t>();
      else if (key == "hard_fraction") c.hard_fraction = v.get<double>();
      else if (key == "regional_noise") c.regional_noise = v.get<double>();
      else if (key == "hard_noise_multiplier") c.hard_noise_multiplier = v.get<double>();
      else if (key == "global_noise") c.global_noise = v.get<double>();
      else if (key == "temperature") c.temperature = v.get<double>();
      else if (key == "top_k") c.top_k = v.get<std::size_t>();
      else if (key == "image_width") c.image_width = v.get<double>();
      else if (key == "image_height") c.image_height = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else Fail(ErrorCode::kFormat, "unknown world config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("world config: ") + e.what());
  }
  c.Validate();
  return c;
}

synth::WorldConfig ReadWorldConfig(const fs::path& path) { return ParseWorldConfig(ReadText(path)); }

void WriteWorldConfig(const fs::path& path, const synth::WorldConfig& c) {
  const json doc{{"n_categories", c.n_categories},
                 {"n_base", c.n_base},
                 {"n_themes", c.n_themes},
                 {"embed_dim", c.embed_dim},
                 {"global_dim", c.global_dim},
                 {"images_train", c.images_train},
                 {"images_test", c.images_test},
                 {"objects_min", c.objects_min},
                 {"objects_max", c.objects_max},
                 {"hard_fraction", c.hard_fraction},
                 {"regional_noise", c.regional_noise},
                 {"hard_noise_multiplier", c.hard_noise_multiplier},
                 {"global_noise", c.global_noise},
                 {"temperature", c.temperature},
                 {"top_k", c.top_k},
                 {"image_width", c.image_width},
                 {"image_height", c.image_height},
                 {"seed", c.seed}};
  WriteText(path, doc.dump(2) + "\n");
}

mlr::TrainConfig ParseTrainConfig(std::string_view json_text) {
  const json doc = ParseJsonDocument(json_text, "train config");
  if (!doc.is_object()) Fail(ErrorCode::kFormat, "train config must be a JSON object");
  mlr::TrainConfig c;
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "beta1") c.beta1 = v.get<double>();
      else if (key == "beta2") c.beta2 = v.get<double>();
      else if (key == "epsilon") c.epsilon = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "iterations") c.iterations = v.get<std::uint64_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "loss_reduction") c.loss_reduction = mlr::ParseReduction(v.get<std::string>());
      else Fail(ErrorCode::kFormat, "unknown train config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("train config: ") + e.what());
  }
  c.Validate();
  return c;
}

mlr::TrainConfig ReadTrainConfig(const fs::path& path) { return ParseTrainConfig(ReadText(path)); }

const char* BranchName(Branch b) { return b == Branch::kText ? "text" : "image"; }

Branch ParseBranch(const std::string& name) {
  if (name == "text") return Branch::kText;
  if (name == "image") return Branch::kImage;
  Fail(ErrorCode::kInvalidArgument, "unknown branch '" + name + "'");
}

void WriteHead(const fs::path& dir, const mlr::MlrHead& head, Branch branch, const mlr::TrainConfig& config) {
  WriteMatrix(dir / "weight.sict", head.weight);
  WriteMatrix(dir / "bias.sict", Matrix(1, head.bias.size(), head.bias));
  const json meta{{"input_dim", head.input_dim()},
                  {"output_dim", head.output_dim()},
                  {"branch", BranchName(branch)},
                  {"train_config", TrainConfigToJson(config)}};
  WriteText(dir / "head.json", meta.dump(2) + "\n");
}

mlr::MlrHead ReadHead(const fs::path& dir) {
  const json meta = ParseJsonDocument(ReadText(dir / "head.json"), (dir / "head.json").string());
  mlr::MlrHead head{ReadMatrix(dir / "weight.sict"), {}};
  const Matrix bias = ReadMatrix(dir / "bias.sict");
  head.bias = bias.data();
  try {
    if (head.input_dim() != meta.at("input_dim").get<std::size_t>() ||
        head.output_dim() != meta.at("output_dim").get<std::size_t>() || head.bias.size() != head.output_dim()) {
      Fail(ErrorCode::kFormat, dir.string() + ": head tensors disagree with head.json");
    }
  } catch (const json::exception& e) {
    Fail(ErrorCode::kFormat, dir.string() + "/head.json: " + e.what());
  }
  return head;
}

void WriteScores(const fs::path& dir, std::span<const MlrScores> scores, const FusionConfig& cfg) {
  const std::size_t C = scores.empty() ? 0 : scores.front().prob_mmlr.size();
  auto table = [&](auto field) {
    Matrix m(scores.size(), C);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const std::vector<double>& v = scores[i].*field;
      if (v.size() != C) Fail(ErrorCode::kDimensionMismatch, "score vectors of differing length");
      std::copy(v.begin(), v.end(), m.row(i).begin());
    }
    return m;
  };
  WriteMatrix(dir / "raw_text.sict", table(&MlrScores::raw_text));
  WriteMatrix(dir / "raw_image.sict", table(&MlrScores::raw_image));
  WriteMatrix(dir / "prob_text.sict", table(&MlrScores::prob_text));
  WriteMatrix(dir / "prob_image.sict", table(&MlrScores::prob_image));
  WriteMatrix(dir / "prob_mmlr.sict", table(&MlrScores::prob_mmlr));
  std::vector<json> rows;
  for (std::size_t i = 0; i < scores.size(); ++i) rows.push_back(json{{"image_id", scores[i].image_id}, {"row", i}});
  WriteText(dir / "scores.jsonl", JsonLines(rows));
  const json meta{{"variant", VariantName(cfg.variant)},
                  {"lambda_base", cfg.lambda_base},
                  {"lambda_novel", cfg.lambda_novel},
                  {"gamma", cfg.gamma},
                  {"prob_floor", cfg.prob_floor}};
  WriteText(dir / "scores.json", meta.dump(2) + "\n");
}

std::vector<MlrScores> ReadScores(const fs::path& dir) {
  const Matrix raw_text = ReadMatrix(dir / "raw_text.sict");
  const Matrix raw_image = ReadMatrix(dir / "raw_image.sict");
  const Matrix prob_text = ReadMatrix(dir / "prob_text.sict");
  const Matrix prob_image = ReadMatrix(dir / "prob_image.sict");
  const Matrix prob_mmlr = ReadMatrix(dir / "prob_mmlr.sict");
  for (const Matrix* m : {&raw_image, &prob_text, &prob_image, &prob_mmlr}) {
    if (m->rows() != raw_text.rows() || m->cols() != raw_text.cols()) {
      Fail(ErrorCode::kFormat, dir.string() + ": score tables differ in shape");
    }
  }
  std::vector<MlrScores> out;
  auto row = [](const Matrix& m, std::size_t r) {
    const auto s = m.row(r);
    return std::vector<double>(s.begin(), s.end());
  };
  ForEachJsonLine(dir / "scores.jsonl", [&](const json& j) {
    const auto r = j.at("row").get<long long>();
    if (r < 0 || static_cast<std::size_t>(r) >= raw_text.rows()) Fail(ErrorCode::kFormat, "score row out of range");
    const auto i = static_cast<std::size_t>(r);
    out.push_back({j.at("image_id").get<std::string>(), row(raw_text, i), row(raw_image, i), row(prob_text, i),
                   row(prob_image, i), row(prob_mmlr, i)});
  });
  return out;
}

FusionConfig ReadScoresConfig(const fs::path& dir) {
  const fs::path path = dir / "scores.json";
  json meta;
  try {
    meta = json::parse(ReadText(path));
  } catch (const json::exception& e) {
    Fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  FusionConfig cfg;
  try {
    cfg.variant = ParseVariant(meta.at("variant").get<std::string>());
    cfg.lambda_base = meta.at("lambda_base").get<double>();
    cfg.lambda_novel = meta.at("lambda_novel").get<double>();
    cfg.gamma = meta.at("gamma").get<double>();
    cfg.prob_floor = meta.at("prob_floor").get<double>();
  } catch (const json::exception& e) {
    Fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  cfg.Validate();
  return cfg;
}

std::string ReportToJson(const eval::EvalReport& report, const CategoryVocabulary& vocab) {
  json doc = json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) doc[key] = *v;
  };
  put("ap_all", report.ap_all);
  put("ap_novel", report.ap_novel);
  put("ap_base", report.ap_base);
  put("ap_rare", report.ap_rare);
  put("ap_common", report.ap_common);
  put("ap_frequent", report.ap_frequent);
  put("r_mlr_novel", report.r_mlr_novel);
  put("r_mlr_base", report.r_mlr_base);
  doc["counts"] = json{{"images", report.num_images},
                       {"detections", report.num_detections},
                       {"gt_objects", report.num_gt_objects}};
  json per_cat = json::object();
  for (const auto& [id, ap] : report.per_category_ap) per_cat[vocab[static_cast<std::size_t>(id)].name] = ap;
  doc["per_category_ap"] = per_cat;
  return doc.dump(2) + "\n";
}

void WriteReport(const fs::path& dir, const eval::EvalReport& report, const CategoryVocabulary& vocab) {
  WriteText(dir / "report.txt", eval::FormatReport(report, vocab));
  WriteText(dir / "report.json", ReportToJson(report, vocab));
}

}  // namespace ctxfuse::io
