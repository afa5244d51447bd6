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


#ifndef DSEG_TRAINER_HPP_
#define DSEG_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dseg/composer.hpp"
#include "dseg/data.hpp"
#include "dseg/rng.hpp"

namespace dseg {

struct AugmentConfig {
  double rotation_max_deg = 15.0;
  double hflip_p = 0.5;
  double vflip_p = 0.5;
  double brightness = 0.2;  // multiplicative range: factor in [1 - b, 1 + b]
  double contrast = 0.2;
  double saturation = 0.2;

  void validate() const;
};

struct TrainConfig {
  double lr0 = 0.01;
  double lr_min = 1e-8;
  int epochs_per_cycle = 25;
  int cycles = 20;
  int batch_size = 4;
  int64_t image_width = 80;
  int64_t image_height = 64;
  uint64_t seed = 0;
  AugmentConfig augment;

  void validate() const;
};

/// lr_min + (lr0 - lr_min) * (1 + cos(pi * step / steps)) / 2.
double cosine_lr(int64_t step_in_cycle, int64_t steps_per_cycle, double lr0, double lr_min);

/// p -= lr * g for every trainable parameter that has a gradient.
void sgd_step(ParamStore& params, double lr);

SegSample hflip(const SegSample& s);
SegSample vflip(const SegSample& s);
/// Rotation about the image centre with reflect padding; bilinear for the
/// image and nearest for the mask.
SegSample rotate(const SegSample& s, double degrees);
/// Random rotation, flips, then brightness/contrast/saturation jitter on the
/// image only. Draws the same number of values from `rng` whatever the config.
SegSample augment(const SegSample& s, const AugmentConfig& cfg, Rng& rng);

struct LogRow {
  int cycle = 0;   // 1-based
  int epoch = 0;   // 1-based, global
  int64_t step = 0;  // global index of the epoch's first optimiser step
  double lr = 0;     // learning rate of that step
  double train_loss = 0;
  double val_dice = 0;
};

std::string log_header();
std::string format_log_row(const LogRow& r);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  /// When set, best.ckpt and train_log.csv are written here as training runs.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const LogRow&)> on_epoch;
  std::string extra_metadata;  // appended to checkpoint metadata
};

struct TrainResult {
  std::vector<LogRow> log;
  std::vector<double> lr_trace;  // one entry per optimiser step
  double best_val_dice = -1;
  int best_epoch = 0;
  std::string best_checkpoint;   // serialized bytes
  int64_t parameter_count = 0;
  std::unique_ptr<ComposedModel> model;  // holds the best weights
};

/// Mean Dice of binarize(predict(x)) against the masks.
double mean_dice(const ComposedModel& model, const std::vector<SegSample>& samples);

/// Mini-batch SGD over cycles x epochs with a per-step cosine schedule that
/// restarts every cycle. Keeps the weights with the best validation Dice.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const std::vector<SegSample>& train_set,
                  const std::vector<SegSample>& val_set, const TrainOptions& opts = {});

}  // namespace dseg

#endif  // DSEG_TRAINER_HPP_
