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


#ifndef DSEG_IMAGE_IO_HPP_
#define DSEG_IMAGE_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace dseg {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit image with interleaved channels (1 = gray, 3 = RGB), row-major.
struct Image8 {
  int64_t width = 0;
  int64_t height = 0;
  int channels = 1;
  std::vector<uint8_t> pixels;

  uint8_t& at(int64_t y, int64_t x, int ch = 0) { return pixels[static_cast<std::size_t>((y * width + x) * channels + ch)]; }
  uint8_t at(int64_t y, int64_t x, int ch = 0) const { return pixels[static_cast<std::size_t>((y * width + x) * channels + ch)]; }
};

/// Reads any PNG, converting to `channels` (1 or 3).
Image8 read_png(const std::filesystem::path& path, int channels);
/// Width and height from the PNG header without decoding pixels.
std::pair<int64_t, int64_t> read_png_size(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& img);
std::string encode_png(const Image8& img);

}  // namespace dseg

#endif  // DSEG_IMAGE_IO_HPP_
