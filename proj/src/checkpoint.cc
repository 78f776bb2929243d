/*
 * Copyright 2026 The SpotDiff Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "spotdiff/checkpoint.h"

#include <bit>
#include <fstream>

#include "spotdiff/error.h"

namespace spotdiff {

void WriteFloat32LE(std::ostream& os, std::span<const float> v) {
  for (float f : v) {
    uint32_t bits = std::bit_cast<uint32_t>(f);
    unsigned char b[4] = {static_cast<unsigned char>(bits),
                          static_cast<unsigned char>(bits >> 8),
                          static_cast<unsigned char>(bits >> 16),
                          static_cast<unsigned char>(bits >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
  }
}

std::vector<float> ReadFloat32LE(std::istream& is, size_t n) {
  std::vector<unsigned char> raw(n * 4);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(is.gcount()) != raw.size()) {
    throw InvalidInput("binary payload is truncated");
  }
  std::vector<float> out(n);
  for (size_t i = 0; i < n; ++i) {
    const unsigned char* b = raw.data() + 4 * i;
    const uint32_t bits = uint32_t(b[0]) | uint32_t(b[1]) << 8 |
                          uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

namespace {

size_t Numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvalidInput("negative dimension in checkpoint");
    n *= static_cast<size_t>(d);
  }
  return n;
}

}  // namespace

nlohmann::ordered_json ModelConfigToJson(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["input_size"] = cfg.input_size;
  j["in_channels"] = cfg.in_channels;
  j["widths"] = cfg.widths;
  j["proj_hidden"] = cfg.proj_hidden;
  j["proj_dim"] = cfg.proj_dim;
  j["num_classes"] = cfg.num_classes;
  j["l2_eps"] = cfg.l2_eps;
  j["input_shift"] = cfg.input_shift;
  j["input_scale"] = cfg.input_scale;
  return j;
}

ModelConfig ModelConfigFromJson(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.input_size = j.at("input_size").get<int>();
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.widths = j.at("widths").get<std::vector<int>>();
    cfg.proj_hidden = j.at("proj_hidden").get<int>();
    cfg.proj_dim = j.at("proj_dim").get<int>();
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.l2_eps = j.at("l2_eps").get<double>();
    cfg.input_shift = j.at("input_shift").get<double>();
    cfg.input_scale = j.at("input_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("bad model config: ") + e.what());
  }
  cfg.Validate();
  return cfg;
}

template <typename T>
Checkpoint MakeCheckpoint(const Model<T>& model, uint64_t seed) {
  Checkpoint c;
  c.model = model.config();
  c.seed = seed;
  for (const auto& p : model.NamedParameters()) {
    ParamBlob b{p.name, p.var.value().shape(), {}};
    b.data.reserve(p.var.value().numel());
    for (T v : p.var.value().data()) b.data.push_back(static_cast<float>(v));
    c.params.push_back(std::move(b));
  }
  return c;
}

template <typename T>
Model<T> ModelFromCheckpoint(const Checkpoint& ckpt) {
  Model<T> model(ckpt.model, 0);
  auto params = model.NamedParameters();
  if (params.size() != ckpt.params.size()) {
    throw InvalidInput("checkpoint has " + std::to_string(ckpt.params.size()) +
                       " tensors, model expects " + std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const ParamBlob& b = ckpt.params[i];
    auto& dst = params[i].var.mutable_value();
    if (b.name != params[i].name || b.shape != dst.shape() || b.data.size() != dst.numel()) {
      throw InvalidInput("checkpoint tensor '" + b.name + "' does not match '" +
                         params[i].name + "' " + dst.ShapeString());
    }
    for (size_t k = 0; k < b.data.size(); ++k) dst[k] = static_cast<T>(b.data[k]);
  }
  return model;
}

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["format"] = "spdckpt";
  header["version"] = ckpt.version;
  header["model"] = ModelConfigToJson(ckpt.model);
  header["config"] = ckpt.train_config;
  header["seed"] = ckpt.seed;
  header["loss_history"] = ckpt.loss_history;
  auto shapes = nlohmann::ordered_json::array();
  for (const auto& b : ckpt.params) {
    shapes.push_back({{"name", b.name}, {"shape", b.shape}});
  }
  header["shapes"] = shapes;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << header.dump() << '\n';
  for (const auto& b : ckpt.params) WriteFloat32LE(os, b.data);
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw InvalidInput("empty checkpoint " + path.string());
  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("format") != "spdckpt") throw InvalidInput("not a .spdckpt file");
    c.version = header.at("version").get<int>();
    if (c.version != kCheckpointVersion) {
      throw InvalidInput("unsupported checkpoint version " + std::to_string(c.version));
    }
    c.model = ModelConfigFromJson(header.at("model"));
    c.train_config = header.at("config");
    c.seed = header.at("seed").get<uint64_t>();
    c.loss_history = header.at("loss_history").get<std::vector<double>>();
    for (const auto& s : header.at("shapes")) {
      ParamBlob b;
      b.name = s.at("name").get<std::string>();
      b.shape = s.at("shape").get<std::vector<int>>();
      c.params.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("bad checkpoint header in " + path.string() + ": " + e.what());
  }
  for (auto& b : c.params) b.data = ReadFloat32LE(is, Numel(b.shape));
  if (is.peek() != std::char_traits<char>::eof()) {
    throw InvalidInput("trailing bytes in checkpoint " + path.string());
  }
  return c;
}

template Checkpoint MakeCheckpoint<float>(const Model<float>&, uint64_t);
template Checkpoint MakeCheckpoint<double>(const Model<double>&, uint64_t);
template Model<float> ModelFromCheckpoint<float>(const Checkpoint&);
template Model<double> ModelFromCheckpoint<double>(const Checkpoint&);

}  // namespace spotdiff
