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


#ifndef DSEG_COMPOSER_HPP_
#define DSEG_COMPOSER_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dseg/checkpoint.hpp"
#include "dseg/decoders.hpp"
#include "dseg/encoders.hpp"
#include "dseg/nn.hpp"

namespace dseg {

/// What the first network hands to the second alongside the image.
enum class Bridge { kProbability, kLogit };

std::string to_string(Bridge b);
Bridge parse_bridge(const std::string& s);

struct ModelConfig {
  EncoderConfig encoder;  // in_channels is the image channel count (3 for RGB)
  DecoderConfig decoder;
  bool double_net = false;
  Bridge bridge = Bridge::kProbability;
  bool loss_on_first = true;
  // Families of the second network; default to the first network's.
  std::optional<EncoderFamily> encoder2;
  std::optional<DecoderFamily> decoder2;

  void validate() const;
  EncoderConfig second_encoder() const;  // in_channels = image channels + 1
  DecoderConfig second_decoder() const;
};

struct ModelOutput {
  Tensorf final_logits;
  Tensorf final_prob;
  std::optional<Tensorf> first_logits;  // double models only
  std::optional<Tensorf> first_prob;
  Tensorf second_input;                 // concat(x, bridge(first)); double models only
  std::vector<Tensorf> first_intermediate;
  std::vector<Tensorf> final_intermediate;
};

/// One encoder-decoder network, or two stacked so that the second sees the
/// image concatenated with the first network's prediction:
///
///   single:  p  = sigmoid(dec1(enc1(x)))
///   double:  p1 = sigmoid(dec1(enc1(x)))
///            p  = sigmoid(dec2(enc2(concat(x, bridge(p1)))))
///
/// Parameters are named enc1.* / dec1.* / enc2.* / dec2.* and are independent
/// between the two networks.
class ComposedModel {
 public:
  ComposedModel(const ModelConfig& cfg, uint64_t seed);

  ModelOutput forward(const Tensorf& x, const ForwardContext& ctx = {}) const;

  /// bce(final) [+ bce(first) if double and loss_on_first]
  /// [+ bce of every intermediate map if deep supervision is on].
  Tensorf loss(const ModelOutput& out, const Tensorf& target) const;

  /// Eval-mode final probabilities, (n, 1, h, w).
  Tensorf predict(const Tensorf& x) const;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  int64_t parameter_count() const { return store_.parameter_count(); }
  /// Trainable parameters whose names start with `prefix` (e.g. "enc1.").
  int64_t parameter_count(const std::string& prefix) const;
  const Encoder& encoder(int net) const;
  const Decoder& decoder(int net) const;

  /// Checkpoint with the model configuration in its metadata.
  Checkpoint to_checkpoint(const std::string& extra_metadata = {}) const;
  /// Rebuilds a model from a checkpoint written by to_checkpoint().
  static ComposedModel from_checkpoint(const Checkpoint& ck);

 private:
  struct Net {
    std::unique_ptr<Encoder> encoder;
    std::unique_ptr<Decoder> decoder;
  };

  ModelConfig cfg_;
  ParamStore store_;
  Net net1_;
  std::optional<Net> net2_;
};

}  // namespace dseg

#endif  // DSEG_COMPOSER_HPP_
