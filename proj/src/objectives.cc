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

#include "spotdiff/objectives.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "spotdiff/error.h"

namespace spotdiff {
namespace {

template <typename T>
void RequireSameShape(const nn::Var<T>& a, const nn::Var<T>& b, const char* op) {
  if (a.value().rank() != 2 || a.value().shape() != b.value().shape()) {
    throw InvalidInput(std::string(op) + ": expected equal [N, D] inputs, got " +
                       a.value().ShapeString() + " and " + b.value().ShapeString());
  }
  if (a.value().dim(0) == 0) throw InvalidInput(std::string(op) + ": empty batch");
}

template <typename T>
void CheckLogits(const nn::Var<T>& logits, std::span<const int> labels,
                 const char* op) {
  const auto& s = logits.value().shape();
  if (s.size() != 2 || s[0] == 0 || s[1] < 2) {
    throw InvalidInput(std::string(op) + ": logits must be [N >= 1, K >= 2], got " +
                       logits.value().ShapeString());
  }
  if (labels.size() != static_cast<size_t>(s[0])) {
    throw InvalidInput(std::string(op) + ": label count does not match logits");
  }
  for (int y : labels) {
    if (y < 0 || y >= s[1]) {
      throw InvalidInput(std::string(op) + ": label " + std::to_string(y) +
                         " out of range");
    }
  }
}

double LogSumExp(const double* v, int n) {
  const double m = *std::max_element(v, v + n);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += std::exp(v[i] - m);
  return m + std::log(acc);
}

nn::Var<double> AsParameter(const EmbeddingBatch& b) {
  b.Validate();
  return nn::Var<double>::Parameter(b.z);
}

nn::Tensor<double> GradOrZero(const nn::Var<double>& v) {
  return v.grad().empty() ? nn::Tensor<double>(v.value().shape()) : v.grad();
}

}  // namespace

void EmbeddingBatch::Validate() const {
  if (z.rank() != 2 || z.dim(0) == 0 || z.dim(1) == 0) {
    throw InvalidInput("embedding batch must be a non-empty [N, D] tensor, got " +
                       z.ShapeString());
  }
  RequireUnitRows(z, "embedding batch");
}

template <typename T>
void RequireUnitRows(const nn::Tensor<T>& z, const char* what) {
  const int n = z.dim(0), d = z.dim(1);
  for (int i = 0; i < n; ++i) {
    double ss = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = z[static_cast<size_t>(i) * d + j];
      ss += v * v;
    }
    const double norm = std::sqrt(ss);
    if (!(std::abs(norm - 1.0) <= kUnitTolerance)) {
      throw InvalidInput(std::string(what) + ": row " + std::to_string(i) +
                         " has norm " + std::to_string(norm) + ", expected 1");
    }
  }
}

double CosineSim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw InvalidInput("CosineSim: vectors must be non-empty and equal length");
  }
  nn::Tensor<double> ta({1, static_cast<int>(a.size())}, std::vector<double>(a.begin(), a.end()));
  nn::Tensor<double> tb({1, static_cast<int>(b.size())}, std::vector<double>(b.begin(), b.end()));
  RequireUnitRows(ta, "CosineSim");
  RequireUnitRows(tb, "CosineSim");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return std::clamp(acc, -1.0, 1.0);
}

template <typename T>
nn::Var<T> InfoNce(const nn::Var<T>& z, const nn::Var<T>& zhat, double tau) {
  RequireSameShape(z, zhat, "InfoNce");
  if (!(tau > 0.0)) throw InvalidInput("InfoNce: tau must be > 0");
  RequireUnitRows(z.value(), "InfoNce anchors");
  RequireUnitRows(zhat.value(), "InfoNce positives");
  const int n = z.value().dim(0), d = z.value().dim(1);
  const T* zv = z.value().ptr();
  const T* pv = zhat.value().ptr();
  auto dot = [d](const T* a, const T* b) {
    double acc = 0.0;
    for (int k = 0; k < d; ++k) acc += static_cast<double>(a[k]) * b[k];
    return acc;
  };
  // weights[i][0] is the positive's softmax weight minus one; weights[i][j]
  // for j != i is the weight of anchor j in row i.
  auto weights = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * n);
  std::vector<double> logits(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const T* zi = zv + static_cast<size_t>(i) * d;
    logits[0] = dot(zi, pv + static_cast<size_t>(i) * d) / tau;
    int k = 1;
    for (int j = 0; j < n; ++j) {
      if (j != i) logits[k++] = dot(zi, zv + static_cast<size_t>(j) * d) / tau;
    }
    const double lse = LogSumExp(logits.data(), n);
    total += lse - logits[0];
    double* w = weights->data() + static_cast<size_t>(i) * n;
    w[i] = std::exp(logits[0] - lse) - 1.0;
    k = 1;
    for (int j = 0; j < n; ++j) {
      if (j != i) w[j] = std::exp(logits[k++] - lse);
    }
  }
  nn::Tensor<T> out({1}, static_cast<T>(total / n));
  return nn::MakeOp<T>(std::move(out), {z, zhat}, [weights, n, d, tau](nn::Node<T>& self) {
    auto& pz = self.parents[0];
    auto& pp = self.parents[1];
    const double g = static_cast<double>(self.grad[0]) / (n * tau);
    const T* zv = pz->value.ptr();
    const T* pv = pp->value.ptr();
    std::vector<double> dz(static_cast<size_t>(n) * d, 0.0);
    std::vector<double> dp(static_cast<size_t>(n) * d, 0.0);
    for (int i = 0; i < n; ++i) {
      const double* w = weights->data() + static_cast<size_t>(i) * n;
      for (int k = 0; k < d; ++k) {
        dz[static_cast<size_t>(i) * d + k] += w[i] * pv[static_cast<size_t>(i) * d + k];
        dp[static_cast<size_t>(i) * d + k] += w[i] * zv[static_cast<size_t>(i) * d + k];
      }
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        for (int k = 0; k < d; ++k) {
          dz[static_cast<size_t>(i) * d + k] += w[j] * zv[static_cast<size_t>(j) * d + k];
          dz[static_cast<size_t>(j) * d + k] += w[j] * zv[static_cast<size_t>(i) * d + k];
        }
      }
    }
    if (pz->requires_grad) {
      T* gz = pz->GradBuffer().ptr();
      for (size_t k = 0; k < dz.size(); ++k) gz[k] += static_cast<T>(g * dz[k]);
    }
    if (pp->requires_grad) {
      T* gp = pp->GradBuffer().ptr();
      for (size_t k = 0; k < dp.size(); ++k) gp[k] += static_cast<T>(g * dp[k]);
    }
  });
}

template <typename T>
nn::Var<T> SpdLoss(const nn::Var<T>& z, const nn::Var<T>& negative,
                   const nn::Var<T>& positive) {
  RequireSameShape(z, negative, "SpdLoss");
  RequireSameShape(z, positive, "SpdLoss");
  RequireUnitRows(z.value(), "SpdLoss anchors");
  RequireUnitRows(negative.value(), "SpdLoss negatives");
  RequireUnitRows(positive.value(), "SpdLoss positives");
  return nn::Mean(nn::Sub(nn::RowDot(z, negative, true), nn::RowDot(z, positive, true)));
}

template <typename T>
nn::Var<T> CombinedLoss(const nn::Var<T>& base, const nn::Var<T>& spd, double eta) {
  if (!(eta >= 0.0)) throw InvalidInput("CombinedLoss: eta must be >= 0");
  if (eta == 0.0) return base;
  return nn::Add(base, nn::Scale(spd, static_cast<T>(eta)));
}

template <typename T>
nn::Var<T> SimSiamPositiveLoss(const nn::Var<T>& p1, const nn::Var<T>& z2,
                               const nn::Var<T>& p2, const nn::Var<T>& z1) {
  RequireSameShape(p1, z2, "SimSiamPositiveLoss");
  RequireSameShape(p2, z1, "SimSiamPositiveLoss");
  for (const auto* v : {&p1, &z2, &p2, &z1}) {
    RequireUnitRows(v->value(), "SimSiamPositiveLoss");
  }
  const nn::Var<T> a = nn::Mean(nn::RowDot(p1, nn::StopGradient(z2), true));
  const nn::Var<T> b = nn::Mean(nn::RowDot(p2, nn::StopGradient(z1), true));
  return nn::Scale(nn::Add(a, b), static_cast<T>(-0.5));
}

template <typename T>
nn::Var<T> CrossEntropy(const nn::Var<T>& logits, std::span<const int> labels) {
  return FocalLoss(logits, labels, 0.0, 1.0);
}

template <typename T>
nn::Var<T> FocalLoss(const nn::Var<T>& logits, std::span<const int> labels,
                     double gamma, double alpha) {
  CheckLogits(logits, labels, "FocalLoss");
  if (!(gamma >= 0.0)) throw InvalidInput("FocalLoss: gamma must be >= 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidInput("FocalLoss: alpha must lie in (0, 1]");
  const int n = logits.value().dim(0), k = logits.value().dim(1);
  // Per-row d(loss_i)/d(logit_k), before the upstream scale and 1/N.
  auto dl = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * k);
  std::vector<double> row(k);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) row[c] = logits.value()[static_cast<size_t>(i) * k + c];
    const double lse = LogSumExp(row.data(), k);
    const int y = labels[i];
    const double logp = row[y] - lse;
    const double p = std::exp(logp);
    const double q = -std::expm1(logp);
    const double qg = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
    total += -alpha * qg * logp;
    // d(loss)/dp * p, folded so that q = 0 stays finite.
    double a = -alpha * qg;
    if (gamma > 0.0 && q > 0.0) a += alpha * gamma * std::pow(q, gamma - 1.0) * p * logp;
    for (int c = 0; c < k; ++c) {
      const double pc = std::exp(row[c] - lse);
      (*dl)[static_cast<size_t>(i) * k + c] = a * ((c == y ? 1.0 : 0.0) - pc);
    }
  }
  nn::Tensor<T> out({1}, static_cast<T>(total / n));
  return nn::MakeOp<T>(std::move(out), {logits}, [dl, n](nn::Node<T>& self) {
    T* g = self.parents[0]->GradBuffer().ptr();
    const double s = static_cast<double>(self.grad[0]) / n;
    for (size_t i = 0; i < dl->size(); ++i) g[i] += static_cast<T>(s * (*dl)[i]);
  });
}

LossValue InfoNce(const EmbeddingBatch& anchors, const EmbeddingBatch& positives,
                  double tau) {
  auto a = AsParameter(anchors);
  auto p = AsParameter(positives);
  auto loss = InfoNce(a, p, tau);
  nn::Backward(loss);
  return {loss.item(), {GradOrZero(a), GradOrZero(p)}};
}

LossValue SpdLoss(const EmbeddingBatch& anchors, const EmbeddingBatch& negatives,
                  const EmbeddingBatch& positives) {
  auto a = AsParameter(anchors);
  auto n = AsParameter(negatives);
  auto p = AsParameter(positives);
  auto loss = SpdLoss(a, n, p);
  nn::Backward(loss);
  return {loss.item(), {GradOrZero(a), GradOrZero(n), GradOrZero(p)}};
}

LossValue CombinedLoss(const LossValue& base, const LossValue& spd, double eta) {
  if (!(eta >= 0.0)) throw InvalidInput("CombinedLoss: eta must be >= 0");
  LossValue out = base;
  if (eta == 0.0) {
    for (const auto& g : spd.grads) out.grads.emplace_back(g.shape());
    return out;
  }
  out.value = base.value + eta * spd.value;
  for (const auto& g : spd.grads) {
    nn::Tensor<double> s = g;
    for (double& v : s.data()) v *= eta;
    out.grads.push_back(std::move(s));
  }
  return out;
}

#define SPOTDIFF_INSTANTIATE(T)                                                        \
  template void RequireUnitRows<T>(const nn::Tensor<T>&, const char*);                 \
  template nn::Var<T> InfoNce<T>(const nn::Var<T>&, const nn::Var<T>&, double);        \
  template nn::Var<T> SpdLoss<T>(const nn::Var<T>&, const nn::Var<T>&,                 \
                                 const nn::Var<T>&);                                   \
  template nn::Var<T> CombinedLoss<T>(const nn::Var<T>&, const nn::Var<T>&, double);   \
  template nn::Var<T> SimSiamPositiveLoss<T>(const nn::Var<T>&, const nn::Var<T>&,     \
                                             const nn::Var<T>&, const nn::Var<T>&);    \
  template nn::Var<T> FocalLoss<T>(const nn::Var<T>&, std::span<const int>, double,    \
                                   double);                                            \
  template nn::Var<T> CrossEntropy<T>(const nn::Var<T>&, std::span<const int>);

SPOTDIFF_INSTANTIATE(float)
SPOTDIFF_INSTANTIATE(double)

#undef SPOTDIFF_INSTANTIATE

}  // namespace spotdiff
