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


#ifndef DSEG_RUN_CONFIG_HPP_
#define DSEG_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dseg/composer.hpp"
#include "dseg/config.hpp"
#include "dseg/data.hpp"
#include "dseg/trainer.hpp"

namespace dseg {

/// Everything a training run needs, settable by key. Keys mirror the field
/// names of the model, training and split settings; unknown keys are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SplitFractions fractions;
  uint64_t split_seed = 0;
  std::string data;  // dataset root
  std::string out;   // output directory

  RunConfig();

  void set(const std::string& key, const std::string& value);
  /// Applies every `key = value` line; errors name the line.
  void apply_text(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  std::string to_text() const;
  /// FNV-1a of to_text(), as 16 hex digits.
  std::string hash() const;

  static const std::vector<std::string>& keys();
};

}  // namespace dseg

#endif  // DSEG_RUN_CONFIG_HPP_
