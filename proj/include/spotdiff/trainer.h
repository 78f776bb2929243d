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

#ifndef SPOTDIFF_TRAINER_H_
#define SPOTDIFF_TRAINER_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "spotdiff/checkpoint.h"
#include "spotdiff/imageops.h"
#include "spotdiff/model.h"

namespace spotdiff {

enum class Objective { kSimClr, kSimSiam, kSupervisedAux };
enum class FloatPrecision { kF32, kF64 };

std::string ToString(Objective o);
Objective ParseObjective(const std::string& name);  // simclr|simsiam|supervised
std::string ToString(FloatPrecision p);
FloatPrecision ParsePrecision(const std::string& name);  // f32|f64

struct TrainConfig {
  Objective objective = Objective::kSimClr;
  double eta = 0.1;
  double tau = 0.2;
  int batch = 16;
  int steps = 500;
  double lr = 0.03;
  double momentum = 0.9;
  uint64_t seed = 0;
  FloatPrecision precision = FloatPrecision::kF32;
  // SPD triplets are drawn from streams separate from the base views, so
  // eta = 0 or spd_enabled = false both give base-only training.
  bool spd_enabled = true;
  // Supervised mode: also add eta * SpdLoss on the projections.
  bool supervised_spd_cosine = false;
  ModelConfig model;
  AugConfig aug;

  void Validate() const;
  nlohmann::ordered_json ToJson() const;
};

// v <- momentum * v + g; p <- p - lr * v. Throws TrainingError(step) if any
// gradient is non-finite.
template <typename T>
void SgdStep(std::span<T> params, std::span<const T> grads, std::span<T> velocity,
             double lr, double momentum, int64_t step);

// Momentum SGD over a fixed parameter list; parameters without a gradient
// this step are treated as having a zero gradient.
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<nn::Var<T>> params, double lr, double momentum);
  void Step(int64_t step);

 private:
  std::vector<nn::Var<T>> params_;
  std::vector<std::vector<T>> velocity_;
  double lr_;
  double momentum_;
};

// Called after each step with (step index from 1, loss).
using StepCallback = std::function<void(int, double)>;

// Contrastive pre-training; the checkpoint carries the config echo and the
// per-step loss history. `corpus` images are resized to the model input.
Checkpoint TrainSpd(const TrainConfig& cfg, std::span<const Image> corpus,
                    const StepCallback& on_step = {});

// Class cross-entropy plus eta times the auxiliary perturbation
// cross-entropy over SPD positives (label 0) and negatives (label 1).
// Sets cfg.model.num_classes from the labels if it is 0.
Checkpoint TrainSupervisedAux(const TrainConfig& cfg, std::span<const Image> corpus,
                              std::span<const int> labels,
                              const StepCallback& on_step = {});

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  // Entries whose +-step evaluations flipped a ReLU; central differences are
  // not a derivative there, so a replacement entry is drawn instead.
  int skipped_kinks = 0;
  std::string worst;  // parameter name and flat index of the worst entry
};

// Compares analytic gradients of `loss` against central differences on up to
// `samples` randomly chosen scalar parameters. Error per entry is
// |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult GradCheck(const std::vector<NamedParameter<double>>& params,
                          const std::function<nn::Var<double>()>& loss,
                          int samples = 200, double step = 1e-5,
                          uint64_t seed = 0);

}  // namespace spotdiff

#endif  // SPOTDIFF_TRAINER_H_
