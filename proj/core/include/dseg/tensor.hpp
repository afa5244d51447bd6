// Copyright 2026 The dualseg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DSEG_TENSOR_HPP_
#define DSEG_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dseg {

/// Raised for any shape or argument violation detected when an operation is
/// recorded. The message names the offending dimension.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NCHW extent of a dense tensor.
struct Shape {
  int64_t n = 0;
  int64_t c = 0;
  int64_t h = 0;
  int64_t w = 0;

  constexpr int64_t numel() const { return n * c * h * w; }
  constexpr int64_t plane() const { return h * w; }
  constexpr bool operator==(const Shape&) const = default;
  std::string str() const;
};

template <typename T>
struct TensorData {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until a gradient is first accumulated
  bool requires_grad = false;
  int64_t node_id = -1;  // -1 for leaves and untracked values

  T* ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), T(0));
    return grad.data();
  }
};

/// Dense N x C x H x W tensor with an optional gradient buffer.
///
/// Copies are shallow: two handles share storage, which is how parameters are
/// shared between the layer that owns them and the tape that records their use.
/// Use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(shape, T(0)); }
  static Tensor full(Shape shape, T v) { return Tensor(shape, v); }
  /// Leaf tensor that accumulates gradients during backward().
  static Tensor leaf(Shape shape, std::vector<T> values);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  int64_t numel() const { return data_->shape.numel(); }

  std::span<T> values() { return data_->values; }
  std::span<const T> values() const { return data_->values; }
  T* data() { return data_->values.data(); }
  const T* data() const { return data_->values.data(); }

  bool has_grad() const { return defined() && !data_->grad.empty(); }
  std::span<const T> grad() const { return data_->grad; }
  std::span<T> grad() { return data_->grad; }
  void zero_grad() { data_->grad.clear(); }

  bool requires_grad() const { return defined() && data_->requires_grad; }
  void set_requires_grad(bool on) { data_->requires_grad = on; }
  int64_t node_id() const { return data_ ? data_->node_id : -1; }

  T item() const;
  T& at(int64_t n, int64_t c, int64_t h, int64_t w);
  T at(int64_t n, int64_t c, int64_t h, int64_t w) const;

  /// Deep copy of values (not gradient), detached from any tape.
  Tensor clone() const;
  /// Handle to the same values that is never recorded on a tape.
  Tensor detach() const { return Tensor(shape(), std::vector<T>(values().begin(), values().end())); }

  const std::shared_ptr<TensorData<T>>& impl() const { return data_; }
  explicit Tensor(std::shared_ptr<TensorData<T>> d) : data_(std::move(d)) {}

 private:
  std::shared_ptr<TensorData<T>> data_;
};

/// Define-by-run record of primitive operations for reverse-mode
/// differentiation. One tape is active per thread at a time; operations
/// record onto it only when some input requires a gradient.
template <typename T>
class Tape {
 public:
  using Data = TensorData<T>;
  using BackwardFn = std::function<void(Data& out)>;

  struct Node {
    std::string op;
    std::vector<std::shared_ptr<Data>> inputs;
    std::shared_ptr<Data> output;
    BackwardFn backward;
  };

  /// Currently active tape for this thread, or nullptr (no recording).
  static Tape* active();

  /// Appends a node. Marks the output as requiring grad and assigns its id.
  int64_t record(std::string op, std::vector<std::shared_ptr<Data>> inputs,
                 const std::shared_ptr<Data>& output, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and propagates in reverse recording order.
  /// Every node is visited once; grads accumulate additively.
  void backward(const Tensor<T>& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  template <typename U>
  friend class TapeScope;
  static Tape* exchange_active(Tape* next);

  std::vector<Node> nodes_;
};

/// RAII activation of a fresh tape on the current thread. Nested scopes
/// shadow the outer one and restore it on exit.
template <typename T>
class TapeScope {
 public:
  TapeScope();
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

  Tape<T>& tape() { return tape_; }

 private:
  Tape<T> tape_;
  Tape<T>* previous_;
};

/// Runs backward() on the active tape. Throws if no tape is active or if
/// `loss` is not a single element.
template <typename T>
void backward(const Tensor<T>& loss);

/// True when an op on these inputs should be recorded.
template <typename T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs);

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace dseg

#endif  // DSEG_TENSOR_HPP_
