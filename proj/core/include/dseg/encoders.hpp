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


#ifndef DSEG_ENCODERS_HPP_
#define DSEG_ENCODERS_HPP_

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dseg/nn.hpp"

namespace dseg {

enum class EncoderFamily { kMobileLike, kResLike, kDpnLike };

std::string to_string(EncoderFamily f);
EncoderFamily parse_encoder_family(const std::string& s);

struct EncoderConfig {
  EncoderFamily family = EncoderFamily::kResLike;
  int in_channels = 3;  // 4 for the second network of a double model
  int width = 8;        // channels of level 0; level i has width * 2^i residual channels
  int stages = 4;       // pyramid levels
  int expansion = 4;    // mobile_like hidden-layer multiplier

  void validate() const;
};

/// Encoder outputs, finest first: level i has spatial size (h / 2^i, w / 2^i).
struct FeaturePyramid {
  std::vector<Tensorf> levels;

  std::vector<int64_t> channels() const;
};

/// MobileNetV2-style block: 1x1 expand -> 3x3 depthwise -> 1x1 linear
/// projection, with an identity shortcut iff stride == 1 and c_in == c_out.
class InvertedResidualBlock {
 public:
  InvertedResidualBlock(ParamStore& store, const std::string& name, int64_t c_in, int64_t c_out,
                        int expansion, int stride, Rng& rng);

  Tensorf operator()(const Tensorf& x, const ForwardContext& ctx) const;
  /// Projection path alone (no shortcut).
  Tensorf project_path(const Tensorf& x, const ForwardContext& ctx) const;

  bool has_shortcut() const { return shortcut_; }

  /// Closed-form trainable parameter count (conv kernels plus batch-norm affine).
  static int64_t parameter_count(int64_t c_in, int64_t c_out, int expansion);

 private:
  bool expand_ = true;
  bool shortcut_ = false;
  ConvBnAct expand_conv_;
  ConvBnAct depthwise_;
  ConvBnAct project_;
};

/// Two 3x3 conv+BN layers with an additive bypass, then ReLU. The bypass is
/// the identity, or a 1x1 conv+BN projection when the stride or width changes.
class ResidualBlock {
 public:
  ResidualBlock(ParamStore& store, const std::string& name, int64_t c_in, int64_t c_out, int stride,
                Rng& rng);

  Tensorf operator()(const Tensorf& x, const ForwardContext& ctx) const;
  Tensorf shortcut(const Tensorf& x, const ForwardContext& ctx) const;

  bool has_projection() const { return projection_; }

 private:
  bool projection_ = false;
  ConvBnAct conv1_;
  ConvBnAct conv2_;
  ConvBnAct proj_;
};

/// Dual-path block. A shared bottleneck transform of concat(res, dense)
/// produces res_channels + increment maps; the first res_channels are added
/// to the residual path and the remaining `increment` are appended to the
/// dense path. The first block of a stage instead receives a single input and
/// projects it (1x1, strided) into fresh residual and dense paths.
class DualPathBlock {
 public:
  DualPathBlock(ParamStore& store, const std::string& name, int64_t c_in, int64_t res_channels,
                int64_t dense_init, int64_t increment, int stride, bool projection, Rng& rng);

  std::pair<Tensorf, Tensorf> operator()(const Tensorf& x_res, const Tensorf& x_dense,
                                         const ForwardContext& ctx) const;

  int64_t res_channels() const { return res_channels_; }
  int64_t increment() const { return increment_; }

 private:
  int64_t res_channels_;
  int64_t dense_init_;
  int64_t increment_;
  bool projection_;
  ConvBnAct proj_;
  ConvBnAct reduce_;
  ConvBnAct spatial_;
  ConvBnAct expand_;
};

class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, ParamStore& store, const std::string& prefix, Rng& rng);

  /// Throws ShapeError naming the padding needed when h or w is not a
  /// multiple of 2^(stages-1).
  FeaturePyramid operator()(const Tensorf& x, const ForwardContext& ctx) const;

  const EncoderConfig& config() const { return cfg_; }
  const std::vector<int64_t>& level_channels() const { return level_channels_; }

  /// Dense-path increment per dual-path block (dpn_like only).
  int64_t dense_increment() const { return increment_; }
  static constexpr int kBlocksPerStage = 2;

 private:
  EncoderConfig cfg_;
  std::vector<int64_t> level_channels_;
  int64_t increment_ = 0;
  ConvBnAct stem_;
  std::vector<std::vector<InvertedResidualBlock>> mobile_;
  std::vector<std::vector<ResidualBlock>> res_;
  std::vector<std::vector<DualPathBlock>> dpn_;
};

/// Free-function form of Encoder::operator().
inline FeaturePyramid encode(const Encoder& enc, const Tensorf& x, const ForwardContext& ctx = {}) {
  return enc(x, ctx);
}

}  // namespace dseg

#endif  // DSEG_ENCODERS_HPP_
