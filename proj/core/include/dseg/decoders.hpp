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


#ifndef DSEG_DECODERS_HPP_
#define DSEG_DECODERS_HPP_

#include <memory>
#include <string>
#include <vector>

#include "dseg/encoders.hpp"
#include "dseg/nn.hpp"

namespace dseg {

enum class DecoderFamily { kUnetLike, kDeeplabLike, kFpnLike };

std::string to_string(DecoderFamily f);
DecoderFamily parse_decoder_family(const std::string& s);

struct DecoderConfig {
  DecoderFamily family = DecoderFamily::kFpnLike;
  int width = 16;
  std::vector<int> aspp_dilations{1, 2, 4};  // deeplab_like only
  bool deep_supervision = false;             // fpn_like: also supervise per-level maps

  void validate() const;
};

struct DecoderOutput {
  Tensorf logits;                     // (n, 1, h, w) at pyramid level 0 resolution
  std::vector<Tensorf> intermediate;  // fpn_like: per-level logits upsampled to (n, 1, h, w)
};

class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual DecoderOutput operator()(const FeaturePyramid& pyr, const ForwardContext& ctx) const = 0;
  const DecoderConfig& config() const { return cfg_; }

 protected:
  explicit Decoder(DecoderConfig cfg) : cfg_(std::move(cfg)) {}
  void check_pyramid(const FeaturePyramid& pyr) const;

  DecoderConfig cfg_;
  std::vector<int64_t> level_channels_;
};

/// Transposed-conv 2x upsampling, concatenation with the same-resolution
/// encoder level, two 3x3 conv+BN+ReLU, repeated to level 0; then a 1x1 head.
class UnetDecoder final : public Decoder {
 public:
  UnetDecoder(const DecoderConfig& cfg, const std::vector<int64_t>& level_channels, ParamStore& store,
              const std::string& prefix, Rng& rng);
  DecoderOutput operator()(const FeaturePyramid& pyr, const ForwardContext& ctx) const override;

 private:
  struct Stage {
    ConvTranspose2d up;
    ConvBnAct conv1;
    ConvBnAct conv2;
  };
  std::vector<Stage> stages_;  // stages_[i] produces level i, i = L-2 .. 0
  Conv2d head_;
};

/// Atrous spatial pyramid pooling on the deepest level (one dilated 3x3
/// branch per configured rate plus a global-average branch), 1x1 fusion,
/// bilinear upsampling to the stride-4 level, fusion with that level's
/// features, 1x1 logit head, bilinear upsampling to full resolution.
class DeeplabDecoder final : public Decoder {
 public:
  DeeplabDecoder(const DecoderConfig& cfg, const std::vector<int64_t>& level_channels, ParamStore& store,
                 const std::string& prefix, Rng& rng);
  DecoderOutput operator()(const FeaturePyramid& pyr, const ForwardContext& ctx) const override;

  /// Output of ASPP branch `i` (dilation aspp_dilations[i]) on `deepest`.
  Tensorf aspp_branch(std::size_t i, const Tensorf& deepest, const ForwardContext& ctx) const;
  int skip_level() const { return skip_level_; }

 private:
  void check_dilations(const Tensorf& deepest) const;

  std::vector<ConvBnAct> branches_;
  Conv2d global_;
  ConvBnAct fuse_;
  int skip_level_ = 0;
  ConvBnAct skip_reduce_;
  ConvBnAct refine_;
  Conv2d head_;
};

/// Top-down pathway with 1x1 lateral connections and a 3x3 smoothing conv per
/// level. Every level emits a 1-channel prediction; predictions are upsampled
/// to full resolution, summed, and passed through a 1x1 conv.
class FpnDecoder final : public Decoder {
 public:
  FpnDecoder(const DecoderConfig& cfg, const std::vector<int64_t>& level_channels, ParamStore& store,
             const std::string& prefix, Rng& rng);
  DecoderOutput operator()(const FeaturePyramid& pyr, const ForwardContext& ctx) const override;

 private:
  std::vector<Conv2d> lateral_;
  std::vector<ConvBnAct> smooth_;
  std::vector<Conv2d> heads_;
  Conv2d merge_;
};

std::unique_ptr<Decoder> make_decoder(const DecoderConfig& cfg, const std::vector<int64_t>& level_channels,
                                      ParamStore& store, const std::string& prefix, Rng& rng);

}  // namespace dseg

#endif  // DSEG_DECODERS_HPP_
