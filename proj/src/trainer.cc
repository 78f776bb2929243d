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

#include "spotdiff/trainer.h"

#include <algorithm>
#include <cmath>
#include <set>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "spotdiff/error.h"
#include "spotdiff/objectives.h"
#include "spotdiff/rng.h"

namespace spotdiff {
namespace {

constexpr uint64_t kBatchStream = 0xba7c4;
constexpr uint64_t kBaseStream = 0xba5e;
constexpr uint64_t kSpdStream = 0x5bd;

RngStream SlotStream(uint64_t seed, uint64_t kind, int step, int slot) {
  return RngStream(seed, HashCombine(HashCombine(kind, static_cast<uint64_t>(step)),
                                     static_cast<uint64_t>(slot)));
}

std::vector<int> DrawBatch(uint64_t seed, int step, int batch, int corpus_size) {
  RngStream rng(seed, HashCombine(kBatchStream, static_cast<uint64_t>(step)));
  std::vector<int> idx(batch);
  for (int& i : idx) i = static_cast<int>(rng.UniformInt(0, corpus_size - 1));
  return idx;
}

nlohmann::ordered_json JitterJson(const JitterStrengths& j) {
  return {{"brightness", j.brightness}, {"contrast", j.contrast},
          {"saturation", j.saturation}, {"hue", j.hue}};
}

// Images and roles for one step, laid out in blocks of `batch` rows.
struct StepViews {
  std::vector<Image> images;
  int blocks = 0;
};

template <typename T>
class Runner {
 public:
  Runner(const TrainConfig& cfg, std::span<const Image> corpus)
      : cfg_(cfg), corpus_(corpus), model_(cfg.model, cfg.seed),
        opt_(model_.Parameters(), cfg.lr, cfg.momentum) {}

  Model<T>& model() { return model_; }

  // SPD views live on their own random streams, so skipping them when they
  // carry zero weight leaves the base objective's draws unchanged.
  bool UseSpd() const { return cfg_.spd_enabled && cfg_.eta > 0.0; }

  // Views for the contrastive objectives: x, xhat, then anchor, positive,
  // negative when SPD is enabled.
  StepViews ContrastiveViews(int step) const {
    const int n = cfg_.batch;
    const auto idx = DrawBatch(cfg_.seed, step, n, static_cast<int>(corpus_.size()));
    StepViews v;
    v.blocks = UseSpd() ? 5 : 2;
    v.images.resize(static_cast<size_t>(v.blocks) * n);
    for (int b = 0; b < n; ++b) {
      const Image& img = corpus_[idx[b]];
      RngStream base = SlotStream(cfg_.seed, kBaseStream, step, b);
      v.images[b] = StrongAugment(img, base, cfg_.aug);
      v.images[n + b] = StrongAugment(img, base, cfg_.aug);
      if (UseSpd()) {
        RngStream spd = SlotStream(cfg_.seed, kSpdStream, step, b);
        SpdTriplet t = MakeSpdTriplet(img, spd, cfg_.aug);
        v.images[2 * n + b] = std::move(t.anchor);
        v.images[3 * n + b] = std::move(t.positive);
        v.images[4 * n + b] = std::move(t.negative);
      }
    }
    return v;
  }

  nn::Tensor<T> BatchTensor(const std::vector<Image>& images, int step) const {
    nn::Tensor<T> x = ImagesToTensor<T>(images, cfg_.model);
    if (!x.AllFinite()) throw TrainingError("non-finite pixels in training batch", step);
    return x;
  }

  nn::Var<T> ContrastiveLoss(int step) {
    const int n = cfg_.batch;
    const StepViews v = ContrastiveViews(step);
    const auto x = nn::Var<T>::Constant(BatchTensor(v.images, step));
    const nn::Var<T> h = model_.Encode(x, nullptr);
    const nn::Var<T> z = model_.Project(h);
    auto block = [&](const nn::Var<T>& t, int k) { return nn::Slice0(t, k * n, (k + 1) * n); };
    nn::Var<T> base;
    if (cfg_.objective == Objective::kSimSiam) {
      const nn::Var<T> pz = model_.Predict(nn::Slice0(z, 0, 2 * n));
      base = SimSiamPositiveLoss(block(pz, 0), block(z, 1), block(pz, 1), block(z, 0));
    } else {
      base = InfoNce(block(z, 0), block(z, 1), cfg_.tau);
    }
    if (!UseSpd()) return base;
    const nn::Var<T> spd = SpdLoss(block(z, 2), block(z, 4), block(z, 3));
    return CombinedLoss(base, spd, cfg_.eta);
  }

  nn::Var<T> SupervisedLoss(int step, std::span<const int> labels) {
    const int n = cfg_.batch;
    const auto idx = DrawBatch(cfg_.seed, step, n, static_cast<int>(corpus_.size()));
    const int blocks = UseSpd() ? 4 : 1;
    std::vector<Image> images(static_cast<size_t>(blocks) * n);
    std::vector<int> y(n);
    for (int b = 0; b < n; ++b) {
      const Image& img = corpus_[idx[b]];
      y[b] = labels[idx[b]];
      RngStream base = SlotStream(cfg_.seed, kBaseStream, step, b);
      images[b] = StrongAugment(img, base, cfg_.aug);
      if (UseSpd()) {
        RngStream spd = SlotStream(cfg_.seed, kSpdStream, step, b);
        SpdTriplet t = MakeSpdTriplet(img, spd, cfg_.aug);
        images[n + b] = std::move(t.positive);
        images[2 * n + b] = std::move(t.negative);
        images[3 * n + b] = std::move(t.anchor);
      }
    }
    const auto x = nn::Var<T>::Constant(BatchTensor(images, step));
    const nn::Var<T> h = model_.Encode(x, nullptr);
    const nn::Var<T> cls = CrossEntropy(model_.ClassLogits(nn::Slice0(h, 0, n)), std::span<const int>(y));
    if (!UseSpd()) return cls;
    std::vector<int> aux_labels(2 * n, 0);
    std::fill(aux_labels.begin() + n, aux_labels.end(), 1);
    nn::Var<T> aux = CrossEntropy(model_.AuxLogits(nn::Slice0(h, n, 3 * n)),
                                  std::span<const int>(aux_labels));
    if (cfg_.supervised_spd_cosine) {
      const nn::Var<T> z = model_.Project(nn::Slice0(h, n, 4 * n));
      aux = nn::Add(aux, SpdLoss(nn::Slice0(z, 2 * n, 3 * n), nn::Slice0(z, n, 2 * n),
                                 nn::Slice0(z, 0, n)));
    }
    return CombinedLoss(cls, aux, cfg_.eta);
  }

  void Update(const nn::Var<T>& loss, int step) {
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) {
      throw TrainingError("training loss became non-finite", step);
    }
    model_.ZeroGrad();
    nn::Backward(loss);
    opt_.Step(step);
    history_.push_back(value);
  }

  Checkpoint Finish() const {
    Checkpoint c = MakeCheckpoint(model_, cfg_.seed);
    c.train_config = cfg_.ToJson();
    c.loss_history = history_;
    return c;
  }

 private:
  const TrainConfig& cfg_;
  std::span<const Image> corpus_;
  Model<T> model_;
  Sgd<T> opt_;
  std::vector<double> history_;
};

// Each step allocates the same activation buffers; keep them in the heap
// instead of returning them to the kernel after every step.
void KeepHeapResident() {
#ifdef __GLIBC__
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 256 << 20);
    return true;
  }();
  (void)done;
#endif
}

template <typename T>
Checkpoint RunTraining(const TrainConfig& cfg, std::span<const Image> corpus,
                       std::span<const int> labels, const StepCallback& on_step) {
  KeepHeapResident();
  Runner<T> runner(cfg, corpus);
  for (int step = 1; step <= cfg.steps; ++step) {
    const nn::Var<T> loss = cfg.objective == Objective::kSupervisedAux
                                ? runner.SupervisedLoss(step, labels)
                                : runner.ContrastiveLoss(step);
    runner.Update(loss, step);
    if (on_step) on_step(step, static_cast<double>(loss.item()));
  }
  return runner.Finish();
}

void RequireCorpus(std::span<const Image> corpus, const ModelConfig& model) {
  if (corpus.empty()) throw InvalidInput("training corpus is empty");
  for (size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].channels() != model.in_channels) {
      throw InvalidInput("corpus image " + std::to_string(i) + " has " +
                         std::to_string(corpus[i].channels()) + " channels, model expects " +
                         std::to_string(model.in_channels));
    }
  }
}

}  // namespace

std::string ToString(Objective o) {
  switch (o) {
    case Objective::kSimClr: return "simclr";
    case Objective::kSimSiam: return "simsiam";
    case Objective::kSupervisedAux: return "supervised";
  }
  return "unknown";
}

Objective ParseObjective(const std::string& name) {
  if (name == "simclr") return Objective::kSimClr;
  if (name == "simsiam") return Objective::kSimSiam;
  if (name == "supervised" || name == "supervised-aux") return Objective::kSupervisedAux;
  throw InvalidInput("unknown objective '" + name + "' (simclr, simsiam, supervised)");
}

std::string ToString(FloatPrecision p) { return p == FloatPrecision::kF64 ? "f64" : "f32"; }

FloatPrecision ParsePrecision(const std::string& name) {
  if (name == "f32" || name == "32") return FloatPrecision::kF32;
  if (name == "f64" || name == "64") return FloatPrecision::kF64;
  throw InvalidInput("unknown precision '" + name + "' (f32, f64)");
}

void TrainConfig::Validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw InvalidInput("eta must be >= 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidInput("tau must be > 0");
  if (batch < 1) throw InvalidInput("batch must be >= 1");
  if (steps < 0) throw InvalidInput("steps must be >= 0");
  if (!(lr > 0.0)) throw InvalidInput("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("momentum must lie in [0, 1)");
  model.Validate();
  aug.Validate();
  if (aug.output_size != model.input_size) {
    throw InvalidInput("augmentation output size " + std::to_string(aug.output_size) +
                       " differs from model input size " + std::to_string(model.input_size));
  }
}

nlohmann::ordered_json TrainConfig::ToJson() const {
  nlohmann::ordered_json j;
  j["objective"] = ToString(objective);
  j["eta"] = eta;
  j["tau"] = tau;
  j["batch"] = batch;
  j["steps"] = steps;
  j["lr"] = lr;
  j["momentum"] = momentum;
  j["seed"] = seed;
  j["precision"] = ToString(precision);
  j["spd_enabled"] = spd_enabled;
  j["supervised_spd_cosine"] = supervised_spd_cosine;
  j["model"] = ModelConfigToJson(model);
  nlohmann::ordered_json a;
  a["local"] = aug.local == LocalAugmentation::kCutPaste ? "cutpaste" : "smoothblend";
  a["output_size"] = aug.output_size;
  a["smoothblend"] = {{"min_area", aug.smoothblend.min_area},
                      {"max_area", aug.smoothblend.max_area},
                      {"min_aspect", aug.smoothblend.min_aspect},
                      {"max_aspect", aug.smoothblend.max_aspect},
                      {"mask_sigma_y", aug.smoothblend.mask_sigma_y},
                      {"mask_sigma_x", aug.smoothblend.mask_sigma_x},
                      {"jitter", JitterJson(aug.smoothblend.jitter)}};
  a["weak"] = {{"min_scale", aug.weak.min_scale}, {"max_scale", aug.weak.max_scale},
               {"jitter", JitterJson(aug.weak.jitter)}, {"jitter_prob", aug.weak.jitter_prob},
               {"min_blur_sigma", aug.weak.min_blur_sigma},
               {"max_blur_sigma", aug.weak.max_blur_sigma},
               {"blur_prob", aug.weak.blur_prob}, {"hflip_prob", aug.weak.hflip_prob}};
  a["strong"] = {{"min_scale", aug.strong.min_scale}, {"max_scale", aug.strong.max_scale},
                 {"min_aspect", aug.strong.min_aspect}, {"max_aspect", aug.strong.max_aspect},
                 {"jitter", JitterJson(aug.strong.jitter)},
                 {"jitter_prob", aug.strong.jitter_prob},
                 {"grayscale_prob", aug.strong.grayscale_prob},
                 {"min_blur_sigma", aug.strong.min_blur_sigma},
                 {"max_blur_sigma", aug.strong.max_blur_sigma},
                 {"blur_prob", aug.strong.blur_prob}, {"hflip_prob", aug.strong.hflip_prob}};
  j["aug"] = a;
  return j;
}

template <typename T>
void SgdStep(std::span<T> params, std::span<const T> grads, std::span<T> velocity,
             double lr, double momentum, int64_t step) {
  if (!(lr > 0.0)) throw InvalidInput("learning rate must be > 0");
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw InvalidInput("SgdStep: parameter, gradient and velocity sizes differ");
  }
  for (T g : grads) {
    if (!std::isfinite(g)) throw TrainingError("non-finite gradient", step);
  }
  const T m = static_cast<T>(momentum), a = static_cast<T>(lr);
  for (size_t i = 0; i < params.size(); ++i) {
    velocity[i] = m * velocity[i] + grads[i];
    params[i] -= a * velocity[i];
  }
}

template <typename T>
Sgd<T>::Sgd(std::vector<nn::Var<T>> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
  for (const auto& p : params_) velocity_.emplace_back(p.value().numel(), T(0));
}

template <typename T>
void Sgd<T>::Step(int64_t step) {
  for (const auto& p : params_) {
    if (!p.grad().empty() && !p.grad().AllFinite()) {
      throw TrainingError("non-finite gradient", step);
    }
  }
  std::vector<T> zeros;
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    std::span<const T> g = p.grad().data();
    if (p.grad().empty()) {
      zeros.assign(p.value().numel(), T(0));
      g = zeros;
    }
    SgdStep<T>(p.mutable_value().data(), g, velocity_[i], lr_, momentum_, step);
  }
}

Checkpoint TrainSpd(const TrainConfig& cfg, std::span<const Image> corpus,
                    const StepCallback& on_step) {
  cfg.Validate();
  if (cfg.objective == Objective::kSupervisedAux) {
    throw InvalidInput("supervised objective needs labels; use TrainSupervisedAux");
  }
  RequireCorpus(corpus, cfg.model);
  return cfg.precision == FloatPrecision::kF64
             ? RunTraining<double>(cfg, corpus, {}, on_step)
             : RunTraining<float>(cfg, corpus, {}, on_step);
}

Checkpoint TrainSupervisedAux(const TrainConfig& cfg_in, std::span<const Image> corpus,
                              std::span<const int> labels, const StepCallback& on_step) {
  TrainConfig cfg = cfg_in;
  cfg.objective = Objective::kSupervisedAux;
  RequireCorpus(corpus, cfg.model);
  if (labels.size() != corpus.size()) throw InvalidInput("label count differs from corpus size");
  int max_label = -1;
  for (int y : labels) {
    if (y < 0) throw InvalidInput("class labels must be >= 0");
    max_label = std::max(max_label, y);
  }
  if (cfg.model.num_classes == 0) cfg.model.num_classes = std::max(2, max_label + 1);
  if (max_label >= cfg.model.num_classes) throw InvalidInput("label exceeds num_classes");
  cfg.Validate();
  return cfg.precision == FloatPrecision::kF64
             ? RunTraining<double>(cfg, corpus, labels, on_step)
             : RunTraining<float>(cfg, corpus, labels, on_step);
}

GradCheckResult GradCheck(const std::vector<NamedParameter<double>>& params,
                          const std::function<nn::Var<double>()>& loss,
                          int samples, double step, uint64_t seed) {
  if (params.empty()) throw InvalidInput("GradCheck: no parameters");
  if (!(step > 0.0)) throw InvalidInput("GradCheck: step must be > 0");
  for (const auto& p : params) const_cast<nn::Var<double>&>(p.var).ZeroGrad();
  nn::ReluPatternMonitor monitor;
  nn::Backward(loss());
  const uint64_t center = monitor.fingerprint();

  std::vector<size_t> offsets;
  size_t total = 0;
  for (const auto& p : params) {
    offsets.push_back(total);
    total += p.var.value().numel();
  }
  const size_t want = std::min<size_t>(static_cast<size_t>(std::max(samples, 0)), total);

  // Candidates: one entry per tensor first, then uniform over all entries.
  RngStream rng(seed, 0x9c);
  std::set<std::pair<size_t, size_t>> tried;
  size_t next_tensor = 0;
  auto next_candidate = [&]() -> std::pair<size_t, size_t> {
    while (next_tensor < params.size()) {
      const size_t t = next_tensor++;
      const size_t n = params[t].var.value().numel();
      if (n) return {t, static_cast<size_t>(rng.UniformInt(0, static_cast<int64_t>(n) - 1))};
    }
    const auto flat = static_cast<size_t>(rng.UniformInt(0, static_cast<int64_t>(total) - 1));
    const size_t t = std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1;
    return {t, flat - offsets[t]};
  };

  GradCheckResult r;
  while (static_cast<size_t>(r.checked) < want && tried.size() < total) {
    const auto [t, k] = next_candidate();
    if (!tried.insert({t, k}).second) continue;
    nn::Var<double> v = params[t].var;
    const double analytic = v.grad().empty() ? 0.0 : v.grad()[k];
    double& slot = v.mutable_value()[k];
    const double orig = slot;
    slot = orig + step;
    monitor.Reset();
    const double up = loss().item();
    const bool up_same = monitor.fingerprint() == center;
    slot = orig - step;
    monitor.Reset();
    const double down = loss().item();
    const bool down_same = monitor.fingerprint() == center;
    slot = orig;
    if (!up_same || !down_same) {
      ++r.skipped_kinks;
      continue;
    }
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    ++r.checked;
    if (err >= r.max_rel_error) {
      r.max_rel_error = err;
      r.worst = params[t].name + "[" + std::to_string(k) + "]";
    }
  }
  return r;
}

template void SgdStep<float>(std::span<float>, std::span<const float>, std::span<float>,
                             double, double, int64_t);
template void SgdStep<double>(std::span<double>, std::span<const double>, std::span<double>,
                              double, double, int64_t);
template class Sgd<float>;
template class Sgd<double>;

}  // namespace spotdiff
