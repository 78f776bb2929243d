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

#include "spotdiff/autodiff.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "spotdiff/error.h"
#include "spotdiff/rng.h"

namespace spotdiff::nn {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

size_t Product(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvalidInput("negative tensor dimension");
    n *= static_cast<size_t>(d);
  }
  return n;
}

template <typename T>
void CheckRank(const Var<T>& v, size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw InvalidInput(std::string(op) + ": expected rank " +
                       std::to_string(rank) + ", got shape " +
                       v.value().ShapeString());
  }
}

// Rows of the 3x3 patch matrix for one [C,H,W] image: cols[C*9, H*W].
template <typename T>
void Im2Col(const T* img, int c_in, int h, int w, T* cols) {
  const size_t hw = static_cast<size_t>(h) * w;
  for (int c = 0; c < c_in; ++c) {
    const T* plane = img + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + (static_cast<size_t>(c) * 9 + ky * 3 + kx) * hw;
        const int dx = kx - 1;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          T* dst = row + static_cast<size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = plane + static_cast<size_t>(sy) * w;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          for (int x = 0; x < x0; ++x) dst[x] = T(0);
          for (int x = x0; x < x1; ++x) dst[x] = src[x + dx];
          for (int x = x1; x < w; ++x) dst[x] = T(0);
        }
      }
    }
  }
}

template <typename T>
void Col2ImAdd(const T* cols, int c_in, int h, int w, T* img) {
  const size_t hw = static_cast<size_t>(h) * w;
  for (int c = 0; c < c_in; ++c) {
    T* plane = img + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = cols + (static_cast<size_t>(c) * 9 + ky * 3 + kx) * hw;
        const int dx = kx - 1;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const T* src = row + static_cast<size_t>(y) * w;
          T* dst = plane + static_cast<size_t>(sy) * w;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          for (int x = x0; x < x1; ++x) dst[x + dx] += src[x];
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T>::Tensor(std::vector<int> shape, T fill)
    : shape_(std::move(shape)), data_(Product(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(std::vector<int> shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != Product(shape_)) {
    throw InvalidInput("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + ShapeString());
  }
}

template <typename T>
bool Tensor<T>::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
std::string Tensor<T>::ShapeString() const {
  std::string s = "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------------------
// Graph plumbing

template <typename T>
Tensor<T>& Node<T>::GradBuffer() {
  if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape(), T(0));
  return grad;
}

template <typename T>
void Node<T>::Accumulate(std::span<const T> g) {
  Tensor<T>& buf = GradBuffer();
  T* d = buf.ptr();
  for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
}

template <typename T>
Var<T> Var<T>::Parameter(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var<T>(std::move(n));
}

template <typename T>
Var<T> Var<T>::Constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return Var<T>(std::move(n));
}

template <typename T>
T Var<T>::item() const {
  if (node_->value.numel() != 1) {
    throw InvalidInput("item() on tensor of shape " + node_->value.ShapeString());
  }
  return node_->value[0];
}

template <typename T>
void Var<T>::ZeroGrad() {
  node_->grad = Tensor<T>();
}

template <typename T>
Var<T> MakeOp(Tensor<T> value, std::vector<Var<T>> parents, BackwardFn<T> fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& p : parents) {
    n->requires_grad = n->requires_grad || p.requires_grad();
  }
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.shared());
    n->backward = std::move(fn);
  }
  return Var<T>(std::move(n));
}

template <typename T>
void Backward(const Var<T>& loss) {
  if (loss.value().numel() != 1) {
    throw InvalidInput("Backward needs a scalar loss, got shape " +
                       loss.value().ShapeString());
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->GradBuffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Ops

template <typename T>
Var<T> Conv3x3(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  CheckRank(x, 4, "Conv3x3");
  CheckRank(weight, 4, "Conv3x3 weight");
  const int n = x.value().dim(0), c_in = x.value().dim(1);
  const int h = x.value().dim(2), w = x.value().dim(3);
  const int c_out = weight.value().dim(0);
  if (weight.value().dim(1) != c_in || weight.value().dim(2) != 3 ||
      weight.value().dim(3) != 3 || bias.value().numel() != static_cast<size_t>(c_out)) {
    throw InvalidInput("Conv3x3: weight " + weight.value().ShapeString() +
                       " incompatible with input " + x.value().ShapeString());
  }
  const int k = c_in * 9;
  const size_t hw = static_cast<size_t>(h) * w;
  AlignedVector<T> cols(static_cast<size_t>(k) * hw);
  Tensor<T> out({n, c_out, h, w});
  CMapR<T> wmat(weight.value().ptr(), c_out, k);
  for (int i = 0; i < n; ++i) {
    T* col = cols.data();
    Im2Col(x.value().ptr() + static_cast<size_t>(i) * c_in * hw, c_in, h, w, col);
    MapR<T> o(out.ptr() + static_cast<size_t>(i) * c_out * hw, c_out, static_cast<Eigen::Index>(hw));
    o.noalias() = wmat * CMapR<T>(col, k, static_cast<Eigen::Index>(hw));
    for (int c = 0; c < c_out; ++c) o.row(c).array() += bias.value()[c];
  }
  return MakeOp<T>(std::move(out), {x, weight, bias},
                   [n, c_in, c_out, h, w, k, hw](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    CMapR<T> wmat(pw->value.ptr(), c_out, k);
    MatR<T> dcols;
    AlignedVector<T> cols(pw->requires_grad ? static_cast<size_t>(k) * hw : 0);
    for (int i = 0; i < n; ++i) {
      CMapR<T> g(self.grad.ptr() + static_cast<size_t>(i) * c_out * hw, c_out,
                 static_cast<Eigen::Index>(hw));
      const T* col = cols.data();
      if (pw->requires_grad) {
        Im2Col(px->value.ptr() + static_cast<size_t>(i) * c_in * hw, c_in, h, w, cols.data());
        MapR<T> dw(pw->GradBuffer().ptr(), c_out, k);
        dw.noalias() += g * CMapR<T>(col, k, static_cast<Eigen::Index>(hw)).transpose();
      }
      if (pb->requires_grad) {
        T* db = pb->GradBuffer().ptr();
        for (int c = 0; c < c_out; ++c) db[c] += g.row(c).sum();
      }
      if (px->requires_grad) {
        dcols.noalias() = wmat.transpose() * g;
        Col2ImAdd(dcols.data(), c_in, h, w,
                  px->GradBuffer().ptr() + static_cast<size_t>(i) * c_in * hw);
      }
    }
  });
}

namespace {
thread_local ReluPatternMonitor* g_relu_monitor = nullptr;
}  // namespace

ReluPatternMonitor::ReluPatternMonitor() {
  if (g_relu_monitor) throw InternalError("ReluPatternMonitor already active");
  g_relu_monitor = this;
}

ReluPatternMonitor::~ReluPatternMonitor() { g_relu_monitor = nullptr; }

void ReluPatternMonitor::Fold(uint64_t word) {
  fingerprint_ = HashCombine(fingerprint_, word);
}

template <typename T>
Var<T> Relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = v > T(0) ? v : T(0);
  if (g_relu_monitor) {
    uint64_t word = 0;
    const T* xv = x.value().ptr();
    for (size_t i = 0; i < out.numel(); ++i) {
      word = (word << 1) | (xv[i] > T(0) ? 1u : 0u);
      if (i % 64 == 63) g_relu_monitor->Fold(word);
    }
    g_relu_monitor->Fold(word);
  }
  return MakeOp<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& p = self.parents[0];
    T* g = p->GradBuffer().ptr();
    const T* xv = p->value.ptr();
    const T* go = self.grad.ptr();
    for (size_t i = 0; i < self.value.numel(); ++i) {
      if (xv[i] > T(0)) g[i] += go[i];
    }
  });
}

template <typename T>
Var<T> AvgPool2(const Var<T>& x) {
  CheckRank(x, 4, "AvgPool2");
  const int n = x.value().dim(0), c = x.value().dim(1);
  const int h = x.value().dim(2), w = x.value().dim(3);
  const int oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) throw InvalidInput("AvgPool2: input smaller than 2x2");
  Tensor<T> out({n, c, oh, ow});
  const T* xv = x.value().ptr();
  T* o = out.ptr();
  for (int p = 0; p < n * c; ++p) {
    const T* src = xv + static_cast<size_t>(p) * h * w;
    T* dst = o + static_cast<size_t>(p) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        const T* s = src + (2 * y) * w + 2 * xx;
        dst[y * ow + xx] = (s[0] + s[1] + s[w] + s[w + 1]) * T(0.25);
      }
    }
  }
  return MakeOp<T>(std::move(out), {x}, [n, c, h, w, oh, ow](Node<T>& self) {
    T* g = self.parents[0]->GradBuffer().ptr();
    const T* go = self.grad.ptr();
    for (int p = 0; p < n * c; ++p) {
      T* dst = g + static_cast<size_t>(p) * h * w;
      const T* src = go + static_cast<size_t>(p) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          const T v = src[y * ow + xx] * T(0.25);
          T* d = dst + (2 * y) * w + 2 * xx;
          d[0] += v;
          d[1] += v;
          d[w] += v;
          d[w + 1] += v;
        }
      }
    }
  });
}

template <typename T>
Var<T> GlobalAvgPool(const Var<T>& x) {
  CheckRank(x, 4, "GlobalAvgPool");
  const int n = x.value().dim(0), c = x.value().dim(1);
  const size_t hw = static_cast<size_t>(x.value().dim(2)) * x.value().dim(3);
  Tensor<T> out({n, c});
  const T* xv = x.value().ptr();
  for (int p = 0; p < n * c; ++p) {
    T acc = T(0);
    for (size_t i = 0; i < hw; ++i) acc += xv[p * hw + i];
    out[p] = acc / static_cast<T>(hw);
  }
  return MakeOp<T>(std::move(out), {x}, [n, c, hw](Node<T>& self) {
    T* g = self.parents[0]->GradBuffer().ptr();
    for (int p = 0; p < n * c; ++p) {
      const T v = self.grad[p] / static_cast<T>(hw);
      for (size_t i = 0; i < hw; ++i) g[p * hw + i] += v;
    }
  });
}

template <typename T>
Var<T> Linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  CheckRank(x, 2, "Linear");
  CheckRank(weight, 2, "Linear weight");
  const int n = x.value().dim(0), in = x.value().dim(1);
  const int out_dim = weight.value().dim(0);
  if (weight.value().dim(1) != in || bias.value().numel() != static_cast<size_t>(out_dim)) {
    throw InvalidInput("Linear: weight " + weight.value().ShapeString() +
                       " incompatible with input " + x.value().ShapeString());
  }
  Tensor<T> out({n, out_dim});
  MapR<T> o(out.ptr(), n, out_dim);
  o.noalias() = CMapR<T>(x.value().ptr(), n, in) *
                CMapR<T>(weight.value().ptr(), out_dim, in).transpose();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < out_dim; ++j) o(i, j) += bias.value()[j];
  }
  return MakeOp<T>(std::move(out), {x, weight, bias}, [n, in, out_dim](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    CMapR<T> g(self.grad.ptr(), n, out_dim);
    if (px->requires_grad) {
      MapR<T>(px->GradBuffer().ptr(), n, in).noalias() +=
          g * CMapR<T>(pw->value.ptr(), out_dim, in);
    }
    if (pw->requires_grad) {
      MapR<T>(pw->GradBuffer().ptr(), out_dim, in).noalias() +=
          g.transpose() * CMapR<T>(px->value.ptr(), n, in);
    }
    if (pb->requires_grad) {
      T* db = pb->GradBuffer().ptr();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out_dim; ++j) db[j] += g(i, j);
    }
  });
}

template <typename T>
Var<T> L2NormalizeRows(const Var<T>& x, T eps) {
  CheckRank(x, 2, "L2NormalizeRows");
  const int n = x.value().dim(0), d = x.value().dim(1);
  Tensor<T> out({n, d});
  auto norms = std::make_shared<std::vector<T>>(n);
  for (int i = 0; i < n; ++i) {
    const T* row = x.value().ptr() + static_cast<size_t>(i) * d;
    T ss = T(0);
    for (int j = 0; j < d; ++j) ss += row[j] * row[j];
    const T norm = std::max(std::sqrt(ss), eps);
    (*norms)[i] = norm;
    for (int j = 0; j < d; ++j) out[static_cast<size_t>(i) * d + j] = row[j] / norm;
  }
  return MakeOp<T>(std::move(out), {x}, [norms, n, d, eps](Node<T>& self) {
    T* g = self.parents[0]->GradBuffer().ptr();
    for (int i = 0; i < n; ++i) {
      const T* y = self.value.ptr() + static_cast<size_t>(i) * d;
      const T* go = self.grad.ptr() + static_cast<size_t>(i) * d;
      const T norm = (*norms)[i];
      T* gi = g + static_cast<size_t>(i) * d;
      if (norm > eps) {
        T yg = T(0);
        for (int j = 0; j < d; ++j) yg += y[j] * go[j];
        for (int j = 0; j < d; ++j) gi[j] += (go[j] - y[j] * yg) / norm;
      } else {
        for (int j = 0; j < d; ++j) gi[j] += go[j] / eps;
      }
    }
  });
}

template <typename T>
Var<T> RowDot(const Var<T>& a, const Var<T>& b, bool clamp_unit) {
  CheckRank(a, 2, "RowDot");
  if (a.value().shape() != b.value().shape()) {
    throw InvalidInput("RowDot: shapes " + a.value().ShapeString() + " and " +
                       b.value().ShapeString() + " differ");
  }
  const int n = a.value().dim(0), d = a.value().dim(1);
  Tensor<T> out({n});
  auto active = std::make_shared<std::vector<char>>(n, 1);
  for (int i = 0; i < n; ++i) {
    T acc = T(0);
    for (int j = 0; j < d; ++j) {
      acc += a.value()[static_cast<size_t>(i) * d + j] * b.value()[static_cast<size_t>(i) * d + j];
    }
    if (clamp_unit && (acc > T(1) || acc < T(-1))) {
      acc = std::clamp(acc, T(-1), T(1));
      (*active)[i] = 0;
    }
    out[i] = acc;
  }
  return MakeOp<T>(std::move(out), {a, b}, [n, d, active](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    for (int side = 0; side < 2; ++side) {
      auto& dst = side == 0 ? pa : pb;
      if (!dst->requires_grad) continue;
      const T* other = (side == 0 ? pb : pa)->value.ptr();
      T* g = dst->GradBuffer().ptr();
      for (int i = 0; i < n; ++i) {
        if (!(*active)[i]) continue;
        const T gi = self.grad[i];
        for (int j = 0; j < d; ++j) {
          g[static_cast<size_t>(i) * d + j] += gi * other[static_cast<size_t>(i) * d + j];
        }
      }
    }
  });
}

template <typename T>
Var<T> MatMulNT(const Var<T>& a, const Var<T>& b) {
  CheckRank(a, 2, "MatMulNT");
  CheckRank(b, 2, "MatMulNT");
  const int n = a.value().dim(0), m = b.value().dim(0), d = a.value().dim(1);
  if (b.value().dim(1) != d) throw InvalidInput("MatMulNT: inner dimensions differ");
  Tensor<T> out({n, m});
  MapR<T>(out.ptr(), n, m).noalias() =
      CMapR<T>(a.value().ptr(), n, d) * CMapR<T>(b.value().ptr(), m, d).transpose();
  return MakeOp<T>(std::move(out), {a, b}, [n, m, d](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    CMapR<T> g(self.grad.ptr(), n, m);
    // Accumulate into temporaries first: a and b may be the same node.
    if (pa->requires_grad) {
      MatR<T> da = g * CMapR<T>(pb->value.ptr(), m, d);
      MapR<T>(pa->GradBuffer().ptr(), n, d) += da;
    }
    if (pb->requires_grad) {
      MatR<T> db = g.transpose() * CMapR<T>(pa->value.ptr(), n, d);
      MapR<T>(pb->GradBuffer().ptr(), m, d) += db;
    }
  });
}

template <typename T>
Var<T> Add(const Var<T>& a, const Var<T>& b) {
  if (a.value().shape() != b.value().shape()) {
    throw InvalidInput("Add: shapes " + a.value().ShapeString() + " and " +
                       b.value().ShapeString() + " differ");
  }
  Tensor<T> out = a.value();
  for (size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return MakeOp<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->Accumulate(self.grad.data());
    }
  });
}

template <typename T>
Var<T> Sub(const Var<T>& a, const Var<T>& b) {
  return Add(a, Scale(b, T(-1)));
}

template <typename T>
Var<T> Scale(const Var<T>& x, T factor) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v *= factor;
  return MakeOp<T>(std::move(out), {x}, [factor](Node<T>& self) {
    T* g = self.parents[0]->GradBuffer().ptr();
    for (size_t i = 0; i < self.grad.numel(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Var<T> Mean(const Var<T>& x) {
  const size_t n = x.value().numel();
  if (n == 0) throw InvalidInput("Mean of empty tensor");
  T acc = T(0);
  for (T v : x.value().data()) acc += v;
  Tensor<T> out({1}, acc / static_cast<T>(n));
  return MakeOp<T>(std::move(out), {x}, [n](Node<T>& self) {
    T* g = self.parents[0]->GradBuffer().ptr();
    const T v = self.grad[0] / static_cast<T>(n);
    for (size_t i = 0; i < n; ++i) g[i] += v;
  });
}

template <typename T>
Var<T> StopGradient(const Var<T>& x) {
  return Var<T>::Constant(x.value());
}

template <typename T>
Var<T> Concat0(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw InvalidInput("Concat0 of nothing");
  std::vector<int> shape = parts.front().value().shape();
  if (shape.empty()) throw InvalidInput("Concat0 needs rank >= 1");
  int rows = 0;
  for (const auto& p : parts) {
    const auto& s = p.value().shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw InvalidInput("Concat0: trailing shapes differ");
    }
    rows += s[0];
  }
  shape[0] = rows;
  Tensor<T> out(shape);
  std::vector<size_t> offsets;
  size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().data().begin(), p.value().data().end(), out.ptr() + off);
    off += p.value().numel();
  }
  return MakeOp<T>(std::move(out), parts, [offsets](Node<T>& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = self.parents[i];
      if (!p->requires_grad) continue;
      p->Accumulate(std::span<const T>(self.grad.ptr() + offsets[i], p->value.numel()));
    }
  });
}

template <typename T>
Var<T> Slice0(const Var<T>& x, int begin, int end) {
  const auto& s = x.value().shape();
  if (s.empty() || begin < 0 || end > s[0] || begin >= end) {
    throw InvalidInput("Slice0: bad range");
  }
  const size_t row = x.value().numel() / s[0];
  std::vector<int> shape = s;
  shape[0] = end - begin;
  std::vector<T> data(x.value().data().begin() + begin * row,
                      x.value().data().begin() + end * row);
  return MakeOp<T>(Tensor<T>(shape, std::move(data)), {x},
                   [begin, row](Node<T>& self) {
    T* g = self.parents[0]->GradBuffer().ptr() + begin * row;
    for (size_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i];
  });
}

#define SPOTDIFF_INSTANTIATE(T)                                               \
  template class Tensor<T>;                                                   \
  template struct Node<T>;                                                    \
  template class Var<T>;                                                      \
  template Var<T> MakeOp<T>(Tensor<T>, std::vector<Var<T>>, BackwardFn<T>);   \
  template void Backward<T>(const Var<T>&);                                   \
  template Var<T> Conv3x3<T>(const Var<T>&, const Var<T>&, const Var<T>&);    \
  template Var<T> Relu<T>(const Var<T>&);                                     \
  template Var<T> AvgPool2<T>(const Var<T>&);                                 \
  template Var<T> GlobalAvgPool<T>(const Var<T>&);                            \
  template Var<T> Linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);     \
  template Var<T> L2NormalizeRows<T>(const Var<T>&, T);                       \
  template Var<T> RowDot<T>(const Var<T>&, const Var<T>&, bool);              \
  template Var<T> MatMulNT<T>(const Var<T>&, const Var<T>&);                  \
  template Var<T> Add<T>(const Var<T>&, const Var<T>&);                       \
  template Var<T> Sub<T>(const Var<T>&, const Var<T>&);                       \
  template Var<T> Scale<T>(const Var<T>&, T);                                 \
  template Var<T> Mean<T>(const Var<T>&);                                     \
  template Var<T> StopGradient<T>(const Var<T>&);                             \
  template Var<T> Concat0<T>(const std::vector<Var<T>>&);                     \
  template Var<T> Slice0<T>(const Var<T>&, int, int);

SPOTDIFF_INSTANTIATE(float)
SPOTDIFF_INSTANTIATE(double)

#undef SPOTDIFF_INSTANTIATE

}  // namespace spotdiff::nn
