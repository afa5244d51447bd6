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


#include "dseg/decoders.hpp"

#include <algorithm>
#include <stdexcept>

namespace dseg {

std::string to_string(DecoderFamily f) {
  switch (f) {
    case DecoderFamily::kUnetLike: return "unet_like";
    case DecoderFamily::kDeeplabLike: return "deeplab_like";
    case DecoderFamily::kFpnLike: return "fpn_like";
  }
  return "?";
}

DecoderFamily parse_decoder_family(const std::string& s) {
  if (s == "unet_like") return DecoderFamily::kUnetLike;
  if (s == "deeplab_like") return DecoderFamily::kDeeplabLike;
  if (s == "fpn_like") return DecoderFamily::kFpnLike;
  throw std::invalid_argument("unknown decoder family '" + s +
                              "' (expected unet_like, deeplab_like or fpn_like)");
}

void DecoderConfig::validate() const {
  if (width < 1) throw std::invalid_argument("decoder width must be >= 1");
  if (family == DecoderFamily::kDeeplabLike && aspp_dilations.empty()) {
    throw std::invalid_argument("aspp_dilations must not be empty");
  }
  for (int d : aspp_dilations) {
    if (d < 1) throw std::invalid_argument("aspp dilation must be positive, got " + std::to_string(d));
  }
}

void Decoder::check_pyramid(const FeaturePyramid& pyr) const {
  if (pyr.levels.size() != level_channels_.size()) {
    throw ShapeError("decoder built for " + std::to_string(level_channels_.size()) +
                     " pyramid levels, got " + std::to_string(pyr.levels.size()));
  }
  for (std::size_t i = 0; i < pyr.levels.size(); ++i) {
    if (pyr.levels[i].shape().c != level_channels_[i]) {
      throw ShapeError("pyramid level " + std::to_string(i) + " has c=" +
                       std::to_string(pyr.levels[i].shape().c) + ", decoder expects c=" +
                       std::to_string(level_channels_[i]));
    }
  }
}

// ---------------------------------------------------------------------------

UnetDecoder::UnetDecoder(const DecoderConfig& cfg, const std::vector<int64_t>& level_channels,
                         ParamStore& store, const std::string& prefix, Rng& rng)
    : Decoder(cfg) {
  cfg_.validate();
  level_channels_ = level_channels;
  const auto L = static_cast<int>(level_channels.size());
  stages_.resize(static_cast<std::size_t>(L - 1));
  int64_t c_below = level_channels[L - 1];
  for (int i = L - 2; i >= 0; --i) {
    const int64_t c = int64_t{cfg.width} << i;
    const std::string name = prefix + ".up" + std::to_string(i);
    Stage& s = stages_[static_cast<std::size_t>(i)];
    s.up = ConvTranspose2d(store, name + ".deconv", c_below, c, 2, 2, 0, rng);
    s.conv1 = ConvBnAct(store, name + ".conv1", c + level_channels[i], c, 3, ConvParams{1, 1, 1, 1}, true, rng);
    s.conv2 = ConvBnAct(store, name + ".conv2", c, c, 3, ConvParams{1, 1, 1, 1}, true, rng);
    c_below = c;
  }
  head_ = Conv2d(store, prefix + ".head", c_below, 1, 1, {}, true, rng);
}

DecoderOutput UnetDecoder::operator()(const FeaturePyramid& pyr, const ForwardContext& ctx) const {
  check_pyramid(pyr);
  Tensorf f = pyr.levels.back();
  for (int i = static_cast<int>(stages_.size()) - 1; i >= 0; --i) {
    const Stage& s = stages_[static_cast<std::size_t>(i)];
    f = s.conv2(s.conv1(concat_channels(s.up(f), pyr.levels[static_cast<std::size_t>(i)]), ctx), ctx);
  }
  return DecoderOutput{head_(f), {}};
}

// ---------------------------------------------------------------------------

DeeplabDecoder::DeeplabDecoder(const DecoderConfig& cfg, const std::vector<int64_t>& level_channels,
                               ParamStore& store, const std::string& prefix, Rng& rng)
    : Decoder(cfg) {
  cfg_.validate();
  level_channels_ = level_channels;
  const auto L = static_cast<int>(level_channels.size());
  const int64_t deep = level_channels.back();
  const int64_t W = cfg.width;
  for (std::size_t i = 0; i < cfg.aspp_dilations.size(); ++i) {
    const int d = cfg.aspp_dilations[i];
    branches_.emplace_back(store, prefix + ".aspp" + std::to_string(i), deep, W, 3, ConvParams{1, d, d, 1},
                           true, rng);
  }
  global_ = Conv2d(store, prefix + ".aspp_global", deep, W, 1, {}, true, rng);
  fuse_ = ConvBnAct(store, prefix + ".aspp_fuse", W * static_cast<int64_t>(branches_.size() + 1), W, 1, {},
                    true, rng);
  skip_level_ = std::min(2, L - 1);
  skip_reduce_ = ConvBnAct(store, prefix + ".skip", level_channels[skip_level_], W, 1, {}, true, rng);
  refine_ = ConvBnAct(store, prefix + ".refine", 2 * W, W, 3, ConvParams{1, 1, 1, 1}, true, rng);
  head_ = Conv2d(store, prefix + ".head", W, 1, 1, {}, true, rng);
}

void DeeplabDecoder::check_dilations(const Tensorf& deepest) const {
  const int64_t h = deepest.shape().h, w = deepest.shape().w;
  for (int d : cfg_.aspp_dilations) {
    if (d > 1 && (d >= h || d >= w)) {
      throw ShapeError("aspp dilation " + std::to_string(d) + " too large for deepest feature map " +
                       std::to_string(h) + "x" + std::to_string(w) + " (needs dilation < min(h, w))");
    }
  }
}

Tensorf DeeplabDecoder::aspp_branch(std::size_t i, const Tensorf& deepest, const ForwardContext& ctx) const {
  return branches_.at(i)(deepest, ctx);
}

DecoderOutput DeeplabDecoder::operator()(const FeaturePyramid& pyr, const ForwardContext& ctx) const {
  check_pyramid(pyr);
  const Tensorf& deep = pyr.levels.back();
  check_dilations(deep);
  std::vector<Tensorf> parts;
  for (const auto& b : branches_) parts.push_back(b(deep, ctx));
  parts.push_back(broadcast_spatial(relu(global_(global_avg_pool(deep))), deep.shape().h, deep.shape().w));
  Tensorf f = fuse_(concat_channels<float>(parts), ctx);

  const Tensorf& skip = pyr.levels[static_cast<std::size_t>(skip_level_)];
  f = upsample_to(f, skip.shape().h, skip.shape().w);
  f = refine_(concat_channels(f, skip_reduce_(skip, ctx)), ctx);
  // The 1x1 head commutes with bilinear upsampling, so it runs at stride 4.
  const Tensorf& full = pyr.levels.front();
  return DecoderOutput{upsample_to(head_(f), full.shape().h, full.shape().w), {}};
}

// ---------------------------------------------------------------------------

FpnDecoder::FpnDecoder(const DecoderConfig& cfg, const std::vector<int64_t>& level_channels,
                       ParamStore& store, const std::string& prefix, Rng& rng)
    : Decoder(cfg) {
  cfg_.validate();
  level_channels_ = level_channels;
  const int64_t W = cfg.width;
  for (std::size_t i = 0; i < level_channels.size(); ++i) {
    const std::string name = prefix + ".level" + std::to_string(i);
    lateral_.emplace_back(store, name + ".lateral", level_channels[i], W, 1, ConvParams{}, true, rng);
    smooth_.emplace_back(store, name + ".smooth", W, W, 3, ConvParams{1, 1, 1, 1}, true, rng);
    heads_.emplace_back(store, name + ".head", W, 1, 1, ConvParams{}, true, rng);
  }
  merge_ = Conv2d(store, prefix + ".merge", 1, 1, 1, {}, true, rng);
  // Start the merge as the mean of the level predictions.
  merge_.weight().values()[0] = 1.0f / static_cast<float>(level_channels.size());
}

DecoderOutput FpnDecoder::operator()(const FeaturePyramid& pyr, const ForwardContext& ctx) const {
  check_pyramid(pyr);
  const auto L = pyr.levels.size();
  const Shape full = pyr.levels.front().shape();
  std::vector<Tensorf> top_down(L);
  top_down[L - 1] = lateral_[L - 1](pyr.levels[L - 1]);
  for (std::size_t k = L - 1; k-- > 0;) {
    top_down[k] = add(lateral_[k](pyr.levels[k]), bilinear_upsample2x(top_down[k + 1]));
  }
  DecoderOutput out;
  Tensorf merged;
  for (std::size_t i = 0; i < L; ++i) {
    Tensorf pred = upsample_to(heads_[i](smooth_[i](top_down[i], ctx)), full.h, full.w);
    merged = merged.defined() ? add(merged, pred) : pred;
    out.intermediate.push_back(pred);
  }
  out.logits = merge_(merged);
  return out;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Decoder> make_decoder(const DecoderConfig& cfg, const std::vector<int64_t>& level_channels,
                                      ParamStore& store, const std::string& prefix, Rng& rng) {
  if (level_channels.size() < 2) throw std::invalid_argument("decoder needs at least 2 pyramid levels");
  switch (cfg.family) {
    case DecoderFamily::kUnetLike:
      return std::make_unique<UnetDecoder>(cfg, level_channels, store, prefix, rng);
    case DecoderFamily::kDeeplabLike:
      return std::make_unique<DeeplabDecoder>(cfg, level_channels, store, prefix, rng);
    case DecoderFamily::kFpnLike:
      return std::make_unique<FpnDecoder>(cfg, level_channels, store, prefix, rng);
  }
  throw std::invalid_argument("unknown decoder family");
}

}  // namespace dseg
