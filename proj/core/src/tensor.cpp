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

#include "dseg/tensor.hpp"

#include <sstream>

namespace dseg {

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

namespace {

void check_shape(const Shape& s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw ShapeError("negative tensor extent " + s.str());
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : data_(std::make_shared<TensorData<T>>()) {
  check_shape(shape);
  data_->shape = shape;
  data_->values.assign(static_cast<std::size_t>(shape.numel()), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : data_(std::make_shared<TensorData<T>>()) {
  check_shape(shape);
  if (static_cast<int64_t>(values.size()) != shape.numel()) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape.str());
  }
  data_->shape = shape;
  data_->values = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::leaf(Shape shape, std::vector<T> values) {
  Tensor t(shape, std::move(values));
  t.data_->requires_grad = true;
  return t;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape().str());
  return data_->values[0];
}

template <typename T>
T& Tensor<T>::at(int64_t n, int64_t c, int64_t h, int64_t w) {
  const Shape& s = data_->shape;
  return data_->values[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
}

template <typename T>
T Tensor<T>::at(int64_t n, int64_t c, int64_t h, int64_t w) const {
  const Shape& s = data_->shape;
  return data_->values[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(shape(), std::vector<T>(data_->values));
}

namespace {

template <typename T>
Tape<T>*& active_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

}  // namespace

template <typename T>
Tape<T>* Tape<T>::active() {
  return active_slot<T>();
}

template <typename T>
Tape<T>* Tape<T>::exchange_active(Tape* next) {
  Tape* prev = active_slot<T>();
  active_slot<T>() = next;
  return prev;
}

template <typename T>
int64_t Tape<T>::record(std::string op, std::vector<std::shared_ptr<Data>> inputs,
                        const std::shared_ptr<Data>& output, BackwardFn fn) {
  const auto id = static_cast<int64_t>(nodes_.size());
  output->requires_grad = true;
  output->node_id = id;
  nodes_.push_back(Node{std::move(op), std::move(inputs), output, std::move(fn)});
  return id;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " +
                     (loss.defined() ? loss.shape().str() : std::string("<undefined>")));
  }
  auto& root = *loss.impl();
  root.ensure_grad()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Data& out = *it->output;
    if (out.grad.empty()) continue;  // not on a path to the loss
    it->backward(out);
  }
}

template <typename T>
TapeScope<T>::TapeScope() : previous_(Tape<T>::exchange_active(&tape_)) {}

template <typename T>
TapeScope<T>::~TapeScope() {
  Tape<T>::exchange_active(previous_);
}

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) throw std::logic_error("backward() called with no active tape");
  tape->backward(loss);
}

template <typename T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const Tensor<T>* t : inputs) {
    if (t != nullptr && t->requires_grad()) return true;
  }
  return false;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);
template bool should_record<float>(std::initializer_list<const Tensor<float>*>);
template bool should_record<double>(std::initializer_list<const Tensor<double>*>);

}  // namespace dseg
