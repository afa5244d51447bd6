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


#include "dseg/encoders.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

namespace dseg {

std::string to_string(EncoderFamily f) {
  switch (f) {
    case EncoderFamily::kMobileLike: return "mobile_like";
    case EncoderFamily::kResLike: return "res_like";
    case EncoderFamily::kDpnLike: return "dpn_like";
  }
  return "?";
}

EncoderFamily parse_encoder_family(const std::string& s) {
  if (s == "mobile_like") return EncoderFamily::kMobileLike;
  if (s == "res_like") return EncoderFamily::kResLike;
  if (s == "dpn_like") return EncoderFamily::kDpnLike;
  throw std::invalid_argument("unknown encoder family '" + s +
                              "' (expected mobile_like, res_like or dpn_like)");
}

void EncoderConfig::validate() const {
  if (width < 1) throw std::invalid_argument("encoder width must be >= 1");
  if (stages < 2) throw std::invalid_argument("encoder stages must be >= 2");
  if (in_channels != 3 && in_channels != 4) {
    throw std::invalid_argument("encoder in_channels must be 3 or 4, got " + std::to_string(in_channels));
  }
  if (expansion < 1) throw std::invalid_argument("expansion must be >= 1");
}

std::vector<int64_t> FeaturePyramid::channels() const {
  std::vector<int64_t> out;
  for (const auto& t : levels) out.push_back(t.shape().c);
  return out;
}

// ---------------------------------------------------------------------------

InvertedResidualBlock::InvertedResidualBlock(ParamStore& store, const std::string& name,
                                             int64_t c_in, int64_t c_out, int expansion, int stride,
                                             Rng& rng)
    : expand_(expansion > 1), shortcut_(stride == 1 && c_in == c_out) {
  const int64_t hidden = c_in * expansion;
  if (expand_) expand_conv_ = ConvBnAct(store, name + ".expand", c_in, hidden, 1, {}, true, rng);
  depthwise_ = ConvBnAct(store, name + ".depthwise", hidden, hidden, 3,
                         ConvParams{stride, 1, 1, static_cast<int>(hidden)}, true, rng);
  // Linear bottleneck: no nonlinearity after the projection.
  project_ = ConvBnAct(store, name + ".project", hidden, c_out, 1, {}, false, rng);
}

Tensorf InvertedResidualBlock::project_path(const Tensorf& x, const ForwardContext& ctx) const {
  Tensorf h = expand_ ? expand_conv_(x, ctx) : x;
  return project_(depthwise_(h, ctx), ctx);
}

Tensorf InvertedResidualBlock::operator()(const Tensorf& x, const ForwardContext& ctx) const {
  Tensorf y = project_path(x, ctx);
  return shortcut_ ? add(y, x) : y;
}

int64_t InvertedResidualBlock::parameter_count(int64_t c_in, int64_t c_out, int expansion) {
  const int64_t hidden = c_in * expansion;
  int64_t n = 0;
  if (expansion > 1) n += c_in * hidden + 2 * hidden;  // 1x1 expand + BN
  n += 9 * hidden + 2 * hidden;                        // depthwise 3x3 + BN
  n += hidden * c_out + 2 * c_out;                     // 1x1 project + BN
  return n;
}

// ---------------------------------------------------------------------------

ResidualBlock::ResidualBlock(ParamStore& store, const std::string& name, int64_t c_in,
                             int64_t c_out, int stride, Rng& rng)
    : projection_(stride != 1 || c_in != c_out) {
  conv1_ = ConvBnAct(store, name + ".conv1", c_in, c_out, 3, ConvParams{stride, 1, 1, 1}, true, rng);
  conv2_ = ConvBnAct(store, name + ".conv2", c_out, c_out, 3, ConvParams{1, 1, 1, 1}, false, rng);
  if (projection_) {
    proj_ = ConvBnAct(store, name + ".shortcut", c_in, c_out, 1, ConvParams{stride, 0, 1, 1}, false, rng);
  }
}

Tensorf ResidualBlock::shortcut(const Tensorf& x, const ForwardContext& ctx) const {
  return projection_ ? proj_(x, ctx) : x;
}

Tensorf ResidualBlock::operator()(const Tensorf& x, const ForwardContext& ctx) const {
  return relu(add(conv2_(conv1_(x, ctx), ctx), shortcut(x, ctx)));
}

// ---------------------------------------------------------------------------

DualPathBlock::DualPathBlock(ParamStore& store, const std::string& name, int64_t c_in,
                             int64_t res_channels, int64_t dense_init, int64_t increment, int stride,
                             bool projection, Rng& rng)
    : res_channels_(res_channels),
      dense_init_(dense_init),
      increment_(increment),
      projection_(projection) {
  if (!projection && stride != 1) {
    throw std::invalid_argument(name + ": only the projecting block of a stage may downsample");
  }
  if (projection) {
    proj_ = ConvBnAct(store, name + ".proj", c_in, res_channels + dense_init, 1,
                      ConvParams{stride, 0, 1, 1}, false, rng);
  }
  const int64_t bottleneck = res_channels;
  reduce_ = ConvBnAct(store, name + ".reduce", c_in, bottleneck, 1, {}, true, rng);
  spatial_ = ConvBnAct(store, name + ".spatial", bottleneck, bottleneck, 3, ConvParams{stride, 1, 1, 1},
                       true, rng);
  expand_ = ConvBnAct(store, name + ".expand", bottleneck, res_channels + increment, 1, {}, false, rng);
}

std::pair<Tensorf, Tensorf> DualPathBlock::operator()(const Tensorf& x_res, const Tensorf& x_dense,
                                                      const ForwardContext& ctx) const {
  if (x_dense.defined()) {
    const Shape a = x_res.shape(), b = x_dense.shape();
    if (a.n != b.n || a.h != b.h || a.w != b.w) {
      throw ShapeError("dual_path_block: residual path " + a.str() + " and dense path " + b.str() +
                       " must share n, h, w");
    }
  }
  const Tensorf in = x_dense.defined() ? concat_channels(x_res, x_dense) : x_res;
  const Tensorf t = expand_(spatial_(reduce_(in, ctx), ctx), ctx);
  if (t.shape().c != res_channels_ + increment_) {
    throw ShapeError("dual_path_block: transform produced c=" + std::to_string(t.shape().c) +
                     ", slices need " + std::to_string(res_channels_ + increment_));
  }
  Tensorf res, dense;
  if (projection_) {
    const Tensorf p = proj_(in, ctx);
    res = slice_channels(p, 0, res_channels_);
    dense = slice_channels(p, res_channels_, dense_init_);
  } else {
    if (x_res.shape().c != res_channels_) {
      throw ShapeError("dual_path_block: residual path has c=" + std::to_string(x_res.shape().c) +
                       ", block expects " + std::to_string(res_channels_));
    }
    res = x_res;
    dense = x_dense;
  }
  Tensorf out_res = add(res, slice_channels(t, 0, res_channels_));
  Tensorf grown = slice_channels(t, res_channels_, increment_);
  Tensorf out_dense = dense.defined() ? concat_channels(dense, grown) : grown;
  return {out_res, out_dense};
}

// ---------------------------------------------------------------------------

Encoder::Encoder(const EncoderConfig& cfg, ParamStore& store, const std::string& prefix, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int64_t w = cfg.width;
  stem_ = ConvBnAct(store, prefix + ".stem", cfg.in_channels, w, 3, ConvParams{1, 1, 1, 1}, true, rng);
  int64_t c_prev = w;
  for (int s = 0; s < cfg.stages; ++s) {
    const int64_t c = w << s;
    const int stride = s == 0 ? 1 : 2;
    const std::string stage = prefix + ".stage" + std::to_string(s);
    switch (cfg.family) {
      case EncoderFamily::kMobileLike: {
        auto& blocks = mobile_.emplace_back();
        blocks.emplace_back(store, stage + ".block0", c_prev, c, cfg.expansion, stride, rng);
        for (int b = 1; b < kBlocksPerStage; ++b) {
          blocks.emplace_back(store, stage + ".block" + std::to_string(b), c, c, cfg.expansion, 1, rng);
        }
        level_channels_.push_back(c);
        break;
      }
      case EncoderFamily::kResLike: {
        auto& blocks = res_.emplace_back();
        blocks.emplace_back(store, stage + ".block0", c_prev, c, stride, rng);
        for (int b = 1; b < kBlocksPerStage; ++b) {
          blocks.emplace_back(store, stage + ".block" + std::to_string(b), c, c, 1, rng);
        }
        level_channels_.push_back(c);
        break;
      }
      case EncoderFamily::kDpnLike: {
        increment_ = std::max<int64_t>(1, w / 2);
        const int64_t dense0 = std::max<int64_t>(1, c / 2);
        auto& blocks = dpn_.emplace_back();
        blocks.emplace_back(store, stage + ".block0", c_prev, c, dense0, increment_, stride, true, rng);
        int64_t dense = dense0 + increment_;
        for (int b = 1; b < kBlocksPerStage; ++b) {
          blocks.emplace_back(store, stage + ".block" + std::to_string(b), c + dense, c, 0, increment_, 1,
                              false, rng);
          dense += increment_;
        }
        level_channels_.push_back(c + dense);
        break;
      }
    }
    c_prev = level_channels_.back();
  }
}

FeaturePyramid Encoder::operator()(const Tensorf& x, const ForwardContext& ctx) const {
  const Shape s = x.shape();
  if (s.c != cfg_.in_channels) {
    throw ShapeError("encode: input has c=" + std::to_string(s.c) + ", encoder expects in_channels=" +
                     std::to_string(cfg_.in_channels));
  }
  const int64_t m = int64_t{1} << (cfg_.stages - 1);
  if (s.h % m != 0 || s.w % m != 0) {
    const int64_t ph = (s.h + m - 1) / m * m, pw = (s.w + m - 1) / m * m;
    throw ShapeError("encode: input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " (h x w) must be divisible by " + std::to_string(m) + "; pad to " +
                     std::to_string(ph) + "x" + std::to_string(pw) + " (+" + std::to_string(ph - s.h) +
                     " rows, +" + std::to_string(pw - s.w) + " cols)");
  }
  FeaturePyramid pyr;
  Tensorf h = stem_(x, ctx);
  for (int st = 0; st < cfg_.stages; ++st) {
    switch (cfg_.family) {
      case EncoderFamily::kMobileLike:
        for (const auto& b : mobile_[st]) h = b(h, ctx);
        break;
      case EncoderFamily::kResLike:
        for (const auto& b : res_[st]) h = b(h, ctx);
        break;
      case EncoderFamily::kDpnLike: {
        Tensorf res = h, dense;
        for (const auto& b : dpn_[st]) std::tie(res, dense) = b(res, dense, ctx);
        h = concat_channels(res, dense);
        break;
      }
    }
    pyr.levels.push_back(h);
  }
  return pyr;
}

}  // namespace dseg
