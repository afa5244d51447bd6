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


#ifndef DSEG_NN_HPP_
#define DSEG_NN_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dseg/checkpoint.hpp"
#include "dseg/ops.hpp"
#include "dseg/rng.hpp"
#include "dseg/tensor.hpp"

namespace dseg {

struct ForwardContext {
  NormMode mode = NormMode::kTrain;
};

/// Owner of every named parameter and buffer of a model, in registration
/// order. Names must be unique.
class ParamStore {
 public:
  /// Registers a trainable tensor.
  Tensorf add_parameter(const std::string& name, Shape shape, std::vector<float> values);
  /// Registers a non-trainable tensor that is still checkpointed (e.g. running stats).
  Tensorf add_buffer(const std::string& name, Shape shape, float fill);

  const std::vector<std::pair<std::string, Tensorf>>& parameters() const { return params_; }
  const std::vector<std::pair<std::string, Tensorf>>& buffers() const { return buffers_; }
  int64_t parameter_count() const;
  bool contains(const std::string& name) const;
  Tensorf find(const std::string& name) const;  // parameter or buffer; undefined if absent

  void zero_grad();

  /// Appends every parameter and buffer to `ck` as f32 entries.
  void save_to(Checkpoint& ck) const;
  /// Copies values from `ck`; every registered name must be present with a
  /// matching shape.
  void load_from(const Checkpoint& ck);

  using Snapshot = std::vector<std::vector<float>>;
  Snapshot snapshot() const;
  void restore(const Snapshot& s);

 private:
  void claim(const std::string& name);
  std::vector<std::pair<std::string, Tensorf>> params_;
  std::vector<std::pair<std::string, Tensorf>> buffers_;
};

/// He-style fan-in-scaled uniform initialisation: U(-b, b), b = sqrt(6 / fan_in).
std::vector<float> he_uniform(Rng& rng, int64_t count, int64_t fan_in);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int64_t c_in, int64_t c_out, int kernel,
         ConvParams params, bool bias, Rng& rng);

  Tensorf operator()(const Tensorf& x) const { return conv2d(x, weight_, bias_, params_); }

  Tensorf& weight() { return weight_; }
  Tensorf& bias() { return bias_; }
  int64_t out_channels() const { return weight_.shape().n; }
  const ConvParams& params() const { return params_; }

 private:
  Tensorf weight_;
  Tensorf bias_;
  ConvParams params_;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore& store, const std::string& name, int64_t c_in, int64_t c_out,
                  int kernel, int stride, int pad, Rng& rng);

  Tensorf operator()(const Tensorf& x) const { return conv_transpose2d(x, weight_, bias_, stride_, pad_); }

 private:
  Tensorf weight_;
  Tensorf bias_;
  int stride_ = 1;
  int pad_ = 0;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParamStore& store, const std::string& name, int64_t channels);

  Tensorf operator()(const Tensorf& x, const ForwardContext& ctx) const;

  Tensorf& gamma() { return gamma_; }
  Tensorf& beta() { return beta_; }

 private:
  Tensorf gamma_;
  Tensorf beta_;
  mutable NormStats<float> stats_;
};

/// conv -> batch norm -> optional relu; the conv has no bias.
class ConvBnAct {
 public:
  ConvBnAct() = default;
  ConvBnAct(ParamStore& store, const std::string& name, int64_t c_in, int64_t c_out, int kernel,
            ConvParams params, bool act, Rng& rng);

  Tensorf operator()(const Tensorf& x, const ForwardContext& ctx) const;

  Conv2d& conv() { return conv_; }
  int64_t out_channels() const { return conv_.out_channels(); }

 private:
  Conv2d conv_;
  BatchNorm2d bn_;
  bool act_ = true;
};

}  // namespace dseg

#endif  // DSEG_NN_HPP_
