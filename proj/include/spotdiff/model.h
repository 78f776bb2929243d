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

// Tiny convolutional encoder f, projection head g and the small heads used
// by the training objectives.

#ifndef SPOTDIFF_MODEL_H_
#define SPOTDIFF_MODEL_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spotdiff/autodiff.h"
#include "spotdiff/image.h"

namespace spotdiff {

struct ModelConfig {
  int input_size = 64;
  int in_channels = 3;
  std::vector<int> widths = {16, 32, 64};
  int proj_hidden = 64;
  int proj_dim = 32;
  // Class head width for supervised training; 0 disables the head.
  int num_classes = 0;
  double l2_eps = 1e-12;
  // Pixels enter the encoder as (v - input_shift) * input_scale.
  double input_shift = 0.5;
  double input_scale = 4.0;

  void Validate() const;
  int feature_dim() const { return widths.empty() ? 0 : widths.back(); }
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ForwardResult {
  nn::Var<T> h;                  // [N, D_h]
  nn::Var<T> z;                  // [N, D_z], unit rows
  std::vector<nn::Var<T>> maps;  // per block, [N, C_b, H_b, W_b]
};

template <typename T>
struct NamedParameter {
  std::string name;
  nn::Var<T> var;
};

template <typename T>
class Model {
 public:
  Model() = default;
  // He-style initialization drawn from (seed, "model init").
  Model(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  // Encoder + projector. `x` is [N, C, S, S] with S = input_size.
  ForwardResult<T> Forward(const nn::Var<T>& x) const;
  // Encoder only; returns h and fills `maps` when non-null.
  nn::Var<T> Encode(const nn::Var<T>& x, std::vector<nn::Var<T>>* maps) const;
  nn::Var<T> Project(const nn::Var<T>& h) const;
  // Linear predictor on z followed by L2 normalization.
  nn::Var<T> Predict(const nn::Var<T>& z) const;
  // Two logits: local perturbation present or not.
  nn::Var<T> AuxLogits(const nn::Var<T>& h) const;
  nn::Var<T> ClassLogits(const nn::Var<T>& h) const;

  // Every trainable tensor in declaration order.
  std::vector<NamedParameter<T>> NamedParameters() const;
  std::vector<nn::Var<T>> Parameters() const;
  void ZeroGrad();

  // Copies values from a model of the same config, converting precision.
  template <typename U>
  void CopyFrom(const Model<U>& other);

 private:
  struct Dense {
    nn::Var<T> w, b;
  };
  ModelConfig cfg_;
  std::vector<Dense> convs_;
  Dense proj1_, proj2_, pred_, aux_, cls_;
};

// Packs images into an [N, C, S, S] constant; each image must be S x S with
// the model's channel count.
template <typename T>
nn::Tensor<T> ImagesToTensor(std::span<const Image> images,
                             const ModelConfig& cfg);

}  // namespace spotdiff

#endif  // SPOTDIFF_MODEL_H_
