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


#ifndef DSEG_CHECKPOINT_HPP_
#define DSEG_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dseg/tensor.hpp"

namespace dseg {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : uint8_t { kF32 = 1, kF64 = 2 };

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<float> f32;   // used when dtype == kF32
  std::vector<double> f64;  // used when dtype == kF64
};

/// Named-tensor file. Byte layout (all integers little-endian):
///
///   "DSEGCKPT"                      8 bytes magic
///   u32 version                     currently 1
///   u32 meta_len, meta bytes        UTF-8 `key = value` lines
///   u32 count
///   count x entry:
///     u32 name_len, name bytes      UTF-8
///     u8  dtype                     1 = f32, 2 = f64
///     u32 rank                      always 4 (N, C, H, W)
///     u64 dims[rank]
///     payload                       numel IEEE-754 values, little-endian
struct Checkpoint {
  static constexpr std::string_view kMagic = "DSEGCKPT";
  static constexpr uint32_t kVersion = 1;

  std::string metadata;
  std::vector<CheckpointEntry> entries;

  void add(const std::string& name, const Tensor<float>& t);
  void add(const std::string& name, const Tensor<double>& t);
  const CheckpointEntry* find(std::string_view name) const;

  std::string serialize() const;
  static Checkpoint parse(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace dseg

#endif  // DSEG_CHECKPOINT_HPP_
