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

#include "spotdiff/model.h"

#include <cmath>

#include "spotdiff/error.h"
#include "spotdiff/rng.h"

namespace spotdiff {
namespace {

constexpr uint64_t kInitStream = 0x1a17;

template <typename T>
nn::Var<T> RandomParam(std::vector<int> shape, int fan_in, double gain,
                       RngStream rng) {
  nn::Tensor<T> t(std::move(shape));
  const double sd = std::sqrt(gain / fan_in);
  for (T& v : t.data()) v = static_cast<T>(rng.Normal(0.0, sd));
  return nn::Var<T>::Parameter(std::move(t));
}

template <typename T>
nn::Var<T> ZeroParam(std::vector<int> shape) {
  return nn::Var<T>::Parameter(nn::Tensor<T>(std::move(shape)));
}

}  // namespace

void ModelConfig::Validate() const {
  if (input_size < kMinImageSide) throw InvalidInput("model input size too small");
  if (in_channels != 1 && in_channels != 3) {
    throw InvalidInput("model input channels must be 1 or 3");
  }
  if (widths.empty()) throw InvalidInput("encoder needs at least one block");
  int side = input_size;
  for (int w : widths) {
    if (w < 1) throw InvalidInput("encoder widths must be positive");
    side /= 2;
  }
  if (side < 1) throw InvalidInput("too many encoder blocks for the input size");
  if (proj_hidden < 1 || proj_dim < 1) throw InvalidInput("projector widths must be positive");
  if (num_classes < 0) throw InvalidInput("num_classes must be >= 0");
  if (!(l2_eps > 0.0)) throw InvalidInput("l2 epsilon must be > 0");
  if (!std::isfinite(input_shift) || !std::isfinite(input_scale) || input_scale == 0.0) {
    throw InvalidInput("input shift and scale must be finite with a non-zero scale");
  }
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.Validate();
  uint64_t key = 0;
  auto next = [&] { return RngStream(seed, HashCombine(kInitStream, key++)); };
  int c_in = cfg_.in_channels;
  for (int w : cfg_.widths) {
    convs_.push_back({RandomParam<T>({w, c_in, 3, 3}, c_in * 9, 2.0, next()),
                      ZeroParam<T>({w})});
    c_in = w;
  }
  const int dh = cfg_.feature_dim();
  proj1_ = {RandomParam<T>({cfg_.proj_hidden, dh}, dh, 2.0, next()),
            ZeroParam<T>({cfg_.proj_hidden})};
  proj2_ = {RandomParam<T>({cfg_.proj_dim, cfg_.proj_hidden}, cfg_.proj_hidden, 1.0, next()),
            ZeroParam<T>({cfg_.proj_dim})};
  pred_ = {RandomParam<T>({cfg_.proj_dim, cfg_.proj_dim}, cfg_.proj_dim, 1.0, next()),
           ZeroParam<T>({cfg_.proj_dim})};
  aux_ = {RandomParam<T>({2, dh}, dh, 1.0, next()), ZeroParam<T>({2})};
  if (cfg_.num_classes > 0) {
    cls_ = {RandomParam<T>({cfg_.num_classes, dh}, dh, 1.0, next()),
            ZeroParam<T>({cfg_.num_classes})};
  }
}

template <typename T>
nn::Var<T> Model<T>::Encode(const nn::Var<T>& x,
                            std::vector<nn::Var<T>>* maps) const {
  const auto& s = x.value().shape();
  if (s.size() != 4 || s[1] != cfg_.in_channels || s[2] != cfg_.input_size ||
      s[3] != cfg_.input_size) {
    throw InvalidInput("encoder expects [N," + std::to_string(cfg_.in_channels) +
                       "," + std::to_string(cfg_.input_size) + "," +
                       std::to_string(cfg_.input_size) + "], got " +
                       x.value().ShapeString());
  }
  nn::Var<T> a = x;
  for (const auto& c : convs_) {
    a = nn::AvgPool2(nn::Relu(nn::Conv3x3(a, c.w, c.b)));
    if (maps) maps->push_back(a);
  }
  return nn::GlobalAvgPool(a);
}

template <typename T>
nn::Var<T> Model<T>::Project(const nn::Var<T>& h) const {
  const nn::Var<T> m = nn::Relu(nn::Linear(h, proj1_.w, proj1_.b));
  return nn::L2NormalizeRows(nn::Linear(m, proj2_.w, proj2_.b),
                             static_cast<T>(cfg_.l2_eps));
}

template <typename T>
ForwardResult<T> Model<T>::Forward(const nn::Var<T>& x) const {
  ForwardResult<T> r;
  r.h = Encode(x, &r.maps);
  r.z = Project(r.h);
  return r;
}

template <typename T>
nn::Var<T> Model<T>::Predict(const nn::Var<T>& z) const {
  return nn::L2NormalizeRows(nn::Linear(z, pred_.w, pred_.b),
                             static_cast<T>(cfg_.l2_eps));
}

template <typename T>
nn::Var<T> Model<T>::AuxLogits(const nn::Var<T>& h) const {
  return nn::Linear(h, aux_.w, aux_.b);
}

template <typename T>
nn::Var<T> Model<T>::ClassLogits(const nn::Var<T>& h) const {
  if (cfg_.num_classes == 0) throw InvalidInput("model has no class head");
  return nn::Linear(h, cls_.w, cls_.b);
}

template <typename T>
std::vector<NamedParameter<T>> Model<T>::NamedParameters() const {
  std::vector<NamedParameter<T>> out;
  for (size_t i = 0; i < convs_.size(); ++i) {
    const std::string p = "encoder.block" + std::to_string(i + 1);
    out.push_back({p + ".weight", convs_[i].w});
    out.push_back({p + ".bias", convs_[i].b});
  }
  auto add = [&](const std::string& name, const Dense& d) {
    out.push_back({name + ".weight", d.w});
    out.push_back({name + ".bias", d.b});
  };
  add("projector.fc1", proj1_);
  add("projector.fc2", proj2_);
  add("predictor", pred_);
  add("aux", aux_);
  if (cfg_.num_classes > 0) add("classifier", cls_);
  return out;
}

template <typename T>
std::vector<nn::Var<T>> Model<T>::Parameters() const {
  std::vector<nn::Var<T>> out;
  for (auto& p : NamedParameters()) out.push_back(p.var);
  return out;
}

template <typename T>
void Model<T>::ZeroGrad() {
  for (auto& p : NamedParameters()) p.var.ZeroGrad();
}

template <typename T>
template <typename U>
void Model<T>::CopyFrom(const Model<U>& other) {
  if (!(other.config() == cfg_)) throw InvalidInput("CopyFrom: model configs differ");
  auto dst = NamedParameters();
  auto src = other.NamedParameters();
  for (size_t i = 0; i < dst.size(); ++i) {
    auto& d = dst[i].var.mutable_value();
    const auto& s = src[i].var.value();
    for (size_t j = 0; j < d.numel(); ++j) d[j] = static_cast<T>(s[j]);
  }
}

template <typename T>
nn::Tensor<T> ImagesToTensor(std::span<const Image> images,
                             const ModelConfig& cfg) {
  const int n = static_cast<int>(images.size());
  const int c = cfg.in_channels, s = cfg.input_size;
  nn::Tensor<T> t({n, c, s, s});
  const size_t plane = static_cast<size_t>(s) * s;
  for (int i = 0; i < n; ++i) {
    const Image& img = images[i];
    if (img.height() != s || img.width() != s || img.channels() != c) {
      throw InvalidInput("image " + std::to_string(i) + " is " +
                         std::to_string(img.height()) + "x" +
                         std::to_string(img.width()) + "x" +
                         std::to_string(img.channels()) + ", model expects " +
                         std::to_string(s) + "x" + std::to_string(s) + "x" +
                         std::to_string(c));
    }
    T* dst = t.ptr() + static_cast<size_t>(i) * c * plane;
    const float* src = img.data().data();
    for (size_t p = 0; p < plane; ++p) {
      for (int ch = 0; ch < c; ++ch) {
        dst[ch * plane + p] = static_cast<T>((src[p * c + ch] - cfg.input_shift) * cfg.input_scale);
      }
    }
  }
  return t;
}

template class Model<float>;
template class Model<double>;
template void Model<float>::CopyFrom<float>(const Model<float>&);
template void Model<float>::CopyFrom<double>(const Model<double>&);
template void Model<double>::CopyFrom<float>(const Model<float>&);
template void Model<double>::CopyFrom<double>(const Model<double>&);
template nn::Tensor<float> ImagesToTensor<float>(std::span<const Image>, const ModelConfig&);
template nn::Tensor<double> ImagesToTensor<double>(std::span<const Image>, const ModelConfig&);

}  // namespace spotdiff
