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

// Training losses. The Var overloads build differentiable graph nodes; the
// EmbeddingBatch overloads evaluate a loss and its input gradients in one
// call for callers that do not hold a graph.

#ifndef SPOTDIFF_OBJECTIVES_H_
#define SPOTDIFF_OBJECTIVES_H_

#include <span>
#include <vector>

#include "spotdiff/autodiff.h"

namespace spotdiff {

// Unit-norm tolerance for embedding inputs.
inline constexpr double kUnitTolerance = 1e-4;

enum class EmbeddingRole { kAnchor, kBasePositive, kSpdPositive, kSpdNegative };

// N x D rows of unit norm.
struct EmbeddingBatch {
  nn::Tensor<double> z;
  EmbeddingRole role = EmbeddingRole::kAnchor;

  int rows() const { return z.rank() == 2 ? z.dim(0) : 0; }
  int dim() const { return z.rank() == 2 ? z.dim(1) : 0; }
  // Throws InvalidInput for N = 0, rank != 2 or a row off the unit sphere.
  void Validate() const;
};

// Scalar loss and d(loss)/d(input) for each input in call order.
struct LossValue {
  double value = 0.0;
  std::vector<nn::Tensor<double>> grads;
};

// Dot product of unit vectors clamped to [-1, 1].
double CosineSim(std::span<const double> a, std::span<const double> b);

// Throws InvalidInput if any row of an [N, D] tensor is off the unit sphere.
template <typename T>
void RequireUnitRows(const nn::Tensor<T>& z, const char* what);

// mean_i -log(exp(s_ii / tau) / (exp(s_ii / tau) + sum_{j != i}
// exp(z_i . z_j / tau))) with s_ii = z_i . zhat_i.
template <typename T>
nn::Var<T> InfoNce(const nn::Var<T>& z, const nn::Var<T>& zhat, double tau);

// mean_i cos(z_i, neg_i) - cos(z_i, pos_i); lies in [-2, 2].
template <typename T>
nn::Var<T> SpdLoss(const nn::Var<T>& z, const nn::Var<T>& negative,
                   const nn::Var<T>& positive);

// base + eta * spd. With eta == 0 the base node is returned unchanged.
template <typename T>
nn::Var<T> CombinedLoss(const nn::Var<T>& base, const nn::Var<T>& spd,
                        double eta);

// -(mean cos(p1, stop(z2)) + mean cos(p2, stop(z1))) / 2 for unit-norm
// predictor outputs p and projections z.
template <typename T>
nn::Var<T> SimSiamPositiveLoss(const nn::Var<T>& p1, const nn::Var<T>& z2,
                               const nn::Var<T>& p2, const nn::Var<T>& z1);

// mean_i -alpha (1 - p_t)^gamma log p_t over softmax of [N, K] logits.
template <typename T>
nn::Var<T> FocalLoss(const nn::Var<T>& logits, std::span<const int> labels,
                     double gamma = 2.0, double alpha = 0.25);

template <typename T>
nn::Var<T> CrossEntropy(const nn::Var<T>& logits, std::span<const int> labels);

LossValue InfoNce(const EmbeddingBatch& anchors, const EmbeddingBatch& positives,
                  double tau);
LossValue SpdLoss(const EmbeddingBatch& anchors, const EmbeddingBatch& negatives,
                  const EmbeddingBatch& positives);
// value = base + eta * spd; grads are base's followed by eta times spd's.
LossValue CombinedLoss(const LossValue& base, const LossValue& spd, double eta);

}  // namespace spotdiff

#endif  // SPOTDIFF_OBJECTIVES_H_
