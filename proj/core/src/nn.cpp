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


#include "dseg/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace dseg {

void ParamStore::claim(const std::string& name) {
  if (contains(name)) throw std::logic_error("duplicate parameter name '" + name + "'");
}

Tensorf ParamStore::add_parameter(const std::string& name, Shape shape, std::vector<float> values) {
  claim(name);
  Tensorf t = Tensorf::leaf(shape, std::move(values));
  params_.emplace_back(name, t);
  return t;
}

Tensorf ParamStore::add_buffer(const std::string& name, Shape shape, float fill) {
  claim(name);
  Tensorf t(shape, fill);
  buffers_.emplace_back(name, t);
  return t;
}

int64_t ParamStore::parameter_count() const {
  int64_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

bool ParamStore::contains(const std::string& name) const {
  return find(name).defined();
}

Tensorf ParamStore::find(const std::string& name) const {
  for (const auto* list : {&params_, &buffers_}) {
    for (const auto& [n, t] : *list) {
      if (n == name) return t;
    }
  }
  return {};
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void ParamStore::save_to(Checkpoint& ck) const {
  for (const auto* list : {&params_, &buffers_}) {
    for (const auto& [n, t] : *list) ck.add(n, t);
  }
}

void ParamStore::load_from(const Checkpoint& ck) {
  for (const auto* list : {&params_, &buffers_}) {
    for (const auto& [n, t] : *list) {
      const CheckpointEntry* e = ck.find(n);
      if (e == nullptr) throw CheckpointError("checkpoint is missing tensor '" + n + "'");
      if (e->shape != t.shape()) {
        throw CheckpointError("tensor '" + n + "' has shape " + e->shape.str() + ", model expects " +
                              t.shape().str());
      }
      Tensorf dst = t;
      if (e->dtype == DType::kF32) {
        std::copy(e->f32.begin(), e->f32.end(), dst.values().begin());
      } else {
        for (std::size_t i = 0; i < e->f64.size(); ++i) dst.values()[i] = static_cast<float>(e->f64[i]);
      }
    }
  }
}

ParamStore::Snapshot ParamStore::snapshot() const {
  Snapshot s;
  for (const auto* list : {&params_, &buffers_}) {
    for (const auto& [_, t] : *list) s.emplace_back(t.values().begin(), t.values().end());
  }
  return s;
}

void ParamStore::restore(const Snapshot& s) {
  std::size_t i = 0;
  for (auto* list : {&params_, &buffers_}) {
    for (auto& [_, t] : *list) {
      if (i >= s.size() || s[i].size() != t.values().size()) {
        throw std::logic_error("snapshot does not match parameter layout");
      }
      std::copy(s[i].begin(), s[i].end(), t.values().begin());
      ++i;
    }
  }
}

std::vector<float> he_uniform(Rng& rng, int64_t count, int64_t fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<float> v(static_cast<std::size_t>(count));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
  return v;
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, int64_t c_in, int64_t c_out, int kernel,
               ConvParams params, bool bias, Rng& rng)
    : params_(params) {
  if (c_in % params.groups != 0 || c_out % params.groups != 0) {
    throw ShapeError(name + ": channels " + std::to_string(c_in) + "->" + std::to_string(c_out) +
                     " not divisible by groups=" + std::to_string(params.groups));
  }
  const int64_t per_group = c_in / params.groups;
  const Shape ws{c_out, per_group, kernel, kernel};
  weight_ = store.add_parameter(name + ".weight", ws, he_uniform(rng, ws.numel(), per_group * kernel * kernel));
  if (bias) {
    bias_ = store.add_parameter(name + ".bias", {1, c_out, 1, 1},
                                std::vector<float>(static_cast<std::size_t>(c_out), 0.0f));
  }
}

ConvTranspose2d::ConvTranspose2d(ParamStore& store, const std::string& name, int64_t c_in,
                                 int64_t c_out, int kernel, int stride, int pad, Rng& rng)
    : stride_(stride), pad_(pad) {
  const Shape ws{c_in, c_out, kernel, kernel};
  // Each output pixel of a stride-k, kernel-k transposed conv sees c_in taps.
  const int64_t fan_in = c_in * std::max<int64_t>(1, (kernel / stride) * (kernel / stride));
  weight_ = store.add_parameter(name + ".weight", ws, he_uniform(rng, ws.numel(), fan_in));
  bias_ = store.add_parameter(name + ".bias", {1, c_out, 1, 1},
                              std::vector<float>(static_cast<std::size_t>(c_out), 0.0f));
}

BatchNorm2d::BatchNorm2d(ParamStore& store, const std::string& name, int64_t channels) {
  const Shape s{1, channels, 1, 1};
  const auto n = static_cast<std::size_t>(channels);
  gamma_ = store.add_parameter(name + ".gamma", s, std::vector<float>(n, 1.0f));
  beta_ = store.add_parameter(name + ".beta", s, std::vector<float>(n, 0.0f));
  stats_.mean = store.add_buffer(name + ".running_mean", s, 0.0f);
  stats_.var = store.add_buffer(name + ".running_var", s, 1.0f);
}

Tensorf BatchNorm2d::operator()(const Tensorf& x, const ForwardContext& ctx) const {
  return batchnorm2d(x, gamma_, beta_, stats_, ctx.mode);
}

ConvBnAct::ConvBnAct(ParamStore& store, const std::string& name, int64_t c_in, int64_t c_out,
                     int kernel, ConvParams params, bool act, Rng& rng)
    : conv_(store, name + ".conv", c_in, c_out, kernel, params, false, rng),
      bn_(store, name + ".bn", c_out),
      act_(act) {}

Tensorf ConvBnAct::operator()(const Tensorf& x, const ForwardContext& ctx) const {
  Tensorf y = bn_(conv_(x), ctx);
  return act_ ? relu(y) : y;
}

}  // namespace dseg
