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

// .spdckpt files: one line of JSON header terminated by '\n', followed by
// little-endian float32 parameter blobs in declaration order.

#ifndef SPOTDIFF_CHECKPOINT_H_
#define SPOTDIFF_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "spotdiff/model.h"

namespace spotdiff {

inline constexpr int kCheckpointVersion = 1;

struct ParamBlob {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct Checkpoint {
  int version = kCheckpointVersion;
  ModelConfig model;
  nlohmann::ordered_json train_config = nlohmann::ordered_json::object();
  uint64_t seed = 0;
  std::vector<double> loss_history;
  std::vector<ParamBlob> params;
};

nlohmann::ordered_json ModelConfigToJson(const ModelConfig& cfg);
ModelConfig ModelConfigFromJson(const nlohmann::json& j);

template <typename T>
Checkpoint MakeCheckpoint(const Model<T>& model, uint64_t seed);

// Rebuilds a model; parameter names and shapes must match the config.
template <typename T>
Model<T> ModelFromCheckpoint(const Checkpoint& ckpt);

void WriteFloat32LE(std::ostream& os, std::span<const float> values);
// Throws InvalidInput if fewer than n values remain.
std::vector<float> ReadFloat32LE(std::istream& is, size_t n);

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws InvalidInput on a malformed or truncated file.
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace spotdiff

#endif  // SPOTDIFF_CHECKPOINT_H_
