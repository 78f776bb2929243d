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

// Dense tensors with tape-free reverse-mode differentiation.
//
// Each op returns a Var that owns its value and keeps its parents alive;
// Backward() walks the resulting DAG in reverse topological order. Ops are
// instantiated for float (training) and double (gradient checking).

#ifndef SPOTDIFF_AUTODIFF_H_
#define SPOTDIFF_AUTODIFF_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace spotdiff::nn {

// 64-byte aligned storage keeps the vectorized kernels on one code path
// regardless of where the heap places a buffer, so results are bit-stable.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, size_t) noexcept { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, T fill = T(0));
  Tensor(std::vector<int> shape, std::vector<T> data);

  const std::vector<int>& shape() const { return shape_; }
  int dim(size_t i) const { return shape_.at(i); }
  size_t rank() const { return shape_.size(); }
  size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T& operator[](size_t i) { return data_[i]; }
  T operator[](size_t i) const { return data_[i]; }

  bool AllFinite() const;
  std::string ShapeString() const;

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<int> shape_;
  AlignedVector<T> data_;
};

template <typename T>
struct Node;

template <typename T>
using BackwardFn = std::function<void(Node<T>&)>;

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  BackwardFn<T> backward;

  // grad += g, allocating on first use.
  void Accumulate(std::span<const T> g);
  Tensor<T>& GradBuffer();
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  // Trainable leaf.
  static Var Parameter(Tensor<T> value);
  // Leaf that never receives gradient.
  static Var Constant(Tensor<T> value);

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  const std::vector<int>& shape() const { return node_->value.shape(); }
  // Scalar value of a one-element tensor.
  T item() const;
  void ZeroGrad();

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Builds an op node; requires_grad is inherited from the parents and the
// backward function is dropped when no parent needs gradient.
template <typename T>
Var<T> MakeOp(Tensor<T> value, std::vector<Var<T>> parents, BackwardFn<T> fn);

// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold one element.
template <typename T>
void Backward(const Var<T>& loss);

// While alive, folds the active set of every Relu evaluated on this thread
// into a fingerprint. Two evaluations with equal fingerprints took the same
// side of every ReLU kink. Monitors do not nest.
class ReluPatternMonitor {
 public:
  ReluPatternMonitor();
  ~ReluPatternMonitor();
  ReluPatternMonitor(const ReluPatternMonitor&) = delete;
  ReluPatternMonitor& operator=(const ReluPatternMonitor&) = delete;

  uint64_t fingerprint() const { return fingerprint_; }
  void Reset() { fingerprint_ = 0; }
  void Fold(uint64_t word);

 private:
  uint64_t fingerprint_ = 0;
};

// x [N,C,H,W], weight [O,C,3,3], bias [O] -> [N,O,H,W]; stride 1, zero pad 1.
template <typename T>
Var<T> Conv3x3(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);
template <typename T>
Var<T> Relu(const Var<T>& x);
// Non-overlapping 2x2 mean; odd trailing rows/columns are dropped.
template <typename T>
Var<T> AvgPool2(const Var<T>& x);
// [N,C,H,W] -> [N,C]
template <typename T>
Var<T> GlobalAvgPool(const Var<T>& x);
// x [N,I], weight [O,I], bias [O] -> [N,O]
template <typename T>
Var<T> Linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);
// Row-wise x / max(||x||, eps).
template <typename T>
Var<T> L2NormalizeRows(const Var<T>& x, T eps);
// Row-wise dot product of [N,D] inputs -> [N]. With clamp, values are
// limited to [-1, 1] (zero gradient where the clamp is active).
template <typename T>
Var<T> RowDot(const Var<T>& a, const Var<T>& b, bool clamp_unit = false);
// a [N,D], b [M,D] -> a b^T [N,M]
template <typename T>
Var<T> MatMulNT(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> Add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> Sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> Scale(const Var<T>& x, T factor);
// Mean of all elements -> scalar [1].
template <typename T>
Var<T> Mean(const Var<T>& x);
// Same value, no gradient flows to `x`.
template <typename T>
Var<T> StopGradient(const Var<T>& x);
// Concatenate along dimension 0; trailing shapes must agree.
template <typename T>
Var<T> Concat0(const std::vector<Var<T>>& parts);
// Rows [begin, end) along dimension 0.
template <typename T>
Var<T> Slice0(const Var<T>& x, int begin, int end);

}  // namespace spotdiff::nn

#endif  // SPOTDIFF_AUTODIFF_H_
