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


#include "dseg/image_io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>

namespace dseg {

namespace {

png_uint_32 format_for(int channels) {
  if (channels == 1) return PNG_FORMAT_GRAY;
  if (channels == 3) return PNG_FORMAT_RGB;
  throw ImageError("unsupported channel count " + std::to_string(channels));
}

// RAII guard so every exit path releases libpng's internal state.
struct ImageGuard {
  png_image* image;
  ~ImageGuard() { png_image_free(image); }
};

}  // namespace

Image8 read_png(const std::filesystem::path& path, int channels) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  ImageGuard guard{&image};
  if (png_image_begin_read_from_file(&image, path.string().c_str()) == 0) {
    throw ImageError("cannot read PNG '" + path.string() + "': " + image.message);
  }
  image.format = format_for(channels);
  Image8 out;
  out.width = image.width;
  out.height = image.height;
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr) == 0) {
    throw ImageError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  return out;
}

std::pair<int64_t, int64_t> read_png_size(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  ImageGuard guard{&image};
  if (png_image_begin_read_from_file(&image, path.string().c_str()) == 0) {
    throw ImageError("cannot read PNG '" + path.string() + "': " + image.message);
  }
  return {image.width, image.height};
}

std::string encode_png(const Image8& img) {
  if (static_cast<int64_t>(img.pixels.size()) != img.width * img.height * img.channels) {
    throw ImageError("pixel buffer does not match " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + "x" + std::to_string(img.channels));
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = format_for(img.channels);
  ImageGuard guard{&image};
  png_alloc_size_t size = 0;
  if (png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr) == 0) {
    throw ImageError(std::string("PNG size query failed: ") + image.message);
  }
  std::string bytes(size, '\0');
  if (png_image_write_to_memory(&image, bytes.data(), &size, 0, img.pixels.data(), 0, nullptr) == 0) {
    throw ImageError(std::string("PNG encode failed: ") + image.message);
  }
  bytes.resize(size);
  return bytes;
}

void write_png(const std::filesystem::path& path, const Image8& img) {
  const std::string bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError("write to '" + path.string() + "' failed");
}

}  // namespace dseg
