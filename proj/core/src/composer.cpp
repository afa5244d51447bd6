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


#include "dseg/composer.hpp"

#include <stdexcept>

#include "dseg/config.hpp"
#include "dseg/ops.hpp"

namespace dseg {

std::string to_string(Bridge b) {
  return b == Bridge::kProbability ? "probability" : "logit";
}

Bridge parse_bridge(const std::string& s) {
  if (s == "probability") return Bridge::kProbability;
  if (s == "logit") return Bridge::kLogit;
  throw std::invalid_argument("unknown bridge '" + s + "' (expected probability or logit)");
}

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.in_channels != 3) {
    throw std::invalid_argument("model input must have 3 channels (RGB), got " +
                                std::to_string(encoder.in_channels));
  }
  if (double_net) second_encoder().validate();
}

EncoderConfig ModelConfig::second_encoder() const {
  EncoderConfig e = encoder;
  e.in_channels = encoder.in_channels + 1;
  if (encoder2) e.family = *encoder2;
  return e;
}

DecoderConfig ModelConfig::second_decoder() const {
  DecoderConfig d = decoder;
  if (decoder2) d.family = *decoder2;
  return d;
}

ComposedModel::ComposedModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  net1_.encoder = std::make_unique<Encoder>(cfg_.encoder, store_, "enc1", rng);
  net1_.decoder = make_decoder(cfg_.decoder, net1_.encoder->level_channels(), store_, "dec1", rng);
  if (cfg_.double_net) {
    Net n;
    n.encoder = std::make_unique<Encoder>(cfg_.second_encoder(), store_, "enc2", rng);
    n.decoder = make_decoder(cfg_.second_decoder(), n.encoder->level_channels(), store_, "dec2", rng);
    net2_ = std::move(n);
  }
}

ModelOutput ComposedModel::forward(const Tensorf& x, const ForwardContext& ctx) const {
  if (x.shape().c != cfg_.encoder.in_channels) {
    throw ShapeError("model input has c=" + std::to_string(x.shape().c) + ", expected " +
                     std::to_string(cfg_.encoder.in_channels));
  }
  ModelOutput out;
  DecoderOutput d1 = (*net1_.decoder)((*net1_.encoder)(x, ctx), ctx);
  if (!net2_) {
    out.final_logits = d1.logits;
    out.final_prob = sigmoid(d1.logits);
    out.final_intermediate = std::move(d1.intermediate);
    return out;
  }
  Tensorf p1 = sigmoid(d1.logits);
  out.second_input = concat_channels(x, cfg_.bridge == Bridge::kProbability ? p1 : d1.logits);
  DecoderOutput d2 = (*net2_->decoder)((*net2_->encoder)(out.second_input, ctx), ctx);
  out.first_logits = d1.logits;
  out.first_prob = p1;
  out.first_intermediate = std::move(d1.intermediate);
  out.final_logits = d2.logits;
  out.final_prob = sigmoid(d2.logits);
  out.final_intermediate = std::move(d2.intermediate);
  return out;
}

Tensorf ComposedModel::loss(const ModelOutput& out, const Tensorf& target) const {
  Tensorf total = bce_with_logits(out.final_logits, target);
  if (out.first_logits && cfg_.loss_on_first) {
    total = add(total, bce_with_logits(*out.first_logits, target));
  }
  const bool supervise_final = net2_ ? cfg_.second_decoder().deep_supervision : cfg_.decoder.deep_supervision;
  if (cfg_.decoder.deep_supervision) {
    for (const auto& m : out.first_intermediate) total = add(total, bce_with_logits(m, target));
  }
  if (supervise_final) {
    for (const auto& m : out.final_intermediate) total = add(total, bce_with_logits(m, target));
  }
  return total;
}

Tensorf ComposedModel::predict(const Tensorf& x) const {
  return forward(x, ForwardContext{NormMode::kEval}).final_prob;
}

int64_t ComposedModel::parameter_count(const std::string& prefix) const {
  int64_t n = 0;
  for (const auto& [name, t] : store_.parameters()) {
    if (name.starts_with(prefix)) n += t.numel();
  }
  return n;
}

const Encoder& ComposedModel::encoder(int net) const {
  if (net == 1) return *net1_.encoder;
  if (net == 2 && net2_) return *net2_->encoder;
  throw std::out_of_range("no encoder for network " + std::to_string(net));
}

const Decoder& ComposedModel::decoder(int net) const {
  if (net == 1) return *net1_.decoder;
  if (net == 2 && net2_) return *net2_->decoder;
  throw std::out_of_range("no decoder for network " + std::to_string(net));
}

Checkpoint ComposedModel::to_checkpoint(const std::string& extra_metadata) const {
  Checkpoint ck;
  ck.metadata = model_config_to_text(cfg_) + extra_metadata;
  store_.save_to(ck);
  return ck;
}

ComposedModel ComposedModel::from_checkpoint(const Checkpoint& ck) {
  ComposedModel m(model_config_from_metadata(ck.metadata), 0);
  m.store_.load_from(ck);
  return m;
}

}  // namespace dseg
