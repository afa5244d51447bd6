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

// Differentiable primitives. Every function validates shapes before touching
// data and records a backward closure on the active tape when any input
// requires a gradient. All are instantiated for float and double.

#ifndef DSEG_OPS_HPP_
#define DSEG_OPS_HPP_

#include <span>
#include <vector>

#include "dseg/tensor.hpp"

namespace dseg {

struct ConvParams {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
  int groups = 1;
};

/// Cross-correlation. `w` is (c_out, c_in/groups, k, k); `b` is (1, c_out, 1, 1)
/// or undefined for no bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, ConvParams p = {});

/// Adjoint of conv2d with respect to its input. `w` is (c_in, c_out, k, k) and
/// the output spatial size is (h-1)*stride - 2*pad + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                           int pad);

enum class NormMode { kTrain, kEval };

/// Running statistics of a batch-norm layer, each shaped (1, c, 1, 1).
template <typename T>
struct NormStats {
  Tensor<T> mean;
  Tensor<T> var;
};

/// Per-channel normalisation over (n, h, w). kTrain uses batch statistics
/// and updates `stats` in place (unbiased variance, exponential averaging
/// with `momentum`); kEval uses `stats`.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      NormStats<T>& stats, NormMode mode, double momentum = 0.1,
                      double epsilon = 1e-5);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// Logistic function, evaluated without overflow for any finite input.
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int kernel, int stride);

/// Bilinear 2x upsampling with half-pixel centres and edge clamping.
template <typename T>
Tensor<T> bilinear_upsample2x(const Tensor<T>& x);

/// Repeated bilinear_upsample2x until the spatial size is (h, w). Both must be
/// x's size times the same power of two.
template <typename T>
Tensor<T> upsample_to(const Tensor<T>& x, int64_t h, int64_t w);

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T> parts[] = {a, b};
  return concat_channels<T>(std::span<const Tensor<T>>(parts));
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int64_t begin, int64_t count);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// Sum of all elements as a 1x1x1x1 tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Spatial mean per (n, c), shaped (n, c, 1, 1).
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// Replicates an (n, c, 1, 1) tensor over an h x w grid.
template <typename T>
Tensor<T> broadcast_spatial(const Tensor<T>& x, int64_t h, int64_t w);

/// Mean binary cross-entropy of logits against a {0,1} target, computed as
/// max(z,0) - z*t + log(1 + exp(-|z|)).
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target);

// Non-differentiable helpers.

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& x);

template <typename T>
Tensor<T> flip_vertical(const Tensor<T>& x);

}  // namespace dseg

#endif  // DSEG_OPS_HPP_
