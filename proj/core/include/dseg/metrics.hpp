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


#ifndef DSEG_METRICS_HPP_
#define DSEG_METRICS_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dseg/data.hpp"
#include "dseg/tensor.hpp"

namespace dseg {

/// h x w probabilities in [0, 1].
struct ProbMap {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> values;

  double at(int64_t y, int64_t x) const { return values[static_cast<std::size_t>(y * width + x)]; }
};

/// h x w mask in {0, 1}.
struct BinMask {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> values;

  uint8_t at(int64_t y, int64_t x) const { return values[static_cast<std::size_t>(y * width + x)]; }
  int64_t count() const;
  bool operator==(const BinMask&) const = default;
};

ProbMap prob_map_from(const Tensorf& t, int64_t n = 0);  // channel 0 of batch item n
BinMask mask_of(const SegSample& s);

/// 8-bit bin of a probability: floor(255 p) clamped to [0, 255].
int quantize(double p);

/// Otsu threshold on the 256-bin histogram of quantize(p). Exact: ties go to
/// the smallest threshold. A single-valued image returns its own bin.
int otsu_threshold(const ProbMap& p);

/// Sets background components that do not touch the border to foreground.
BinMask fill_holes(const BinMask& m, int connectivity = 4);

/// fill_holes(quantize(p) > otsu_threshold(p)).
BinMask binarize(const ProbMap& p, int connectivity = 4);

/// Both empty: 1. Exactly one empty: 0.
double dice(const BinMask& a, const BinMask& b);
double iou(const BinMask& a, const BinMask& b);
double mae(const ProbMap& p, const BinMask& g);
/// Mean over t in 0..255 of dice(p > t/255, g).
double sweep_dice(const ProbMap& p, const BinMask& g);

/// Maps a (1, 3, h, w) image to (1, 1, h, w) probabilities.
using Predictor = std::function<Tensorf(const Tensorf&)>;

/// Mean of the predictions on the identity, horizontal, vertical and double
/// flips, each mapped back to the original orientation. Calls `predict` four
/// times.
ProbMap tta_predict(const Predictor& predict, const Tensorf& x);

struct EvalOptions {
  bool tta = false;
  bool sweep = false;
  int connectivity = 4;
};

struct MetricsRow {
  std::string id;
  double dice = 0;
  double iou = 0;
  double mae = 0;
  std::optional<double> sweep_dice;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;  // sorted by id
  double mean_dice = 0;
  double mean_iou = 0;
  double mean_mae = 0;
  std::optional<double> mean_sweep_dice;
  std::vector<std::pair<std::string, std::string>> skipped;  // id, reason
  int64_t forward_passes = 0;
  // Provenance.
  std::string config_hash;
  std::string checkpoint_id;
  uint64_t seed = 0;

  /// `id,dice,iou,mae[,sweep_dice]` plus a final `mean` row, values x100.
  std::string to_csv() const;
  std::string summary() const;
};

/// Predicts every sample, records MAE on the probability map, then Dice and
/// IoU on binarize(). Samples whose image and mask sizes differ are skipped.
MetricsReport evaluate(const Predictor& predict, const std::vector<SegSample>& samples, const EvalOptions& opts);

}  // namespace dseg

#endif  // DSEG_METRICS_HPP_
