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


#include "dseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dseg/rng.hpp"

namespace dseg {

namespace fs = std::filesystem;

int64_t SegSample::foreground() const {
  int64_t n = 0;
  for (uint8_t v : mask) n += v;
  return n;
}

std::pair<Tensorf, Tensorf> make_batch(std::span<const SegSample* const> samples) {
  if (samples.empty()) throw DataError("empty batch");
  const int64_t h = samples[0]->height, w = samples[0]->width;
  const auto n = static_cast<int64_t>(samples.size());
  Tensorf x(Shape{n, 3, h, w});
  Tensorf y(Shape{n, 1, h, w});
  for (int64_t i = 0; i < n; ++i) {
    const SegSample& s = *samples[static_cast<std::size_t>(i)];
    if (s.height != h || s.width != w) {
      throw DataError("batch sample '" + s.id + "' is " + std::to_string(s.width) + "x" +
                      std::to_string(s.height) + ", expected " + std::to_string(w) + "x" + std::to_string(h));
    }
    std::copy(s.image.begin(), s.image.end(), x.data() + i * 3 * h * w);
    std::transform(s.mask.begin(), s.mask.end(), y.data() + i * h * w,
                   [](uint8_t v) { return static_cast<float>(v); });
  }
  return {x, y};
}

Tensorf image_tensor(const SegSample& s) {
  return Tensorf(Shape{1, 3, s.height, s.width}, s.image);
}

SegSample sample_from_images(std::string id, const Image8& rgb, const Image8& mask) {
  if (rgb.width != mask.width || rgb.height != mask.height) {
    throw DataError("'" + id + "': image is " + std::to_string(rgb.width) + "x" + std::to_string(rgb.height) +
                    " but mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height));
  }
  SegSample s;
  s.id = std::move(id);
  s.height = rgb.height;
  s.width = rgb.width;
  const int64_t hw = s.plane();
  s.image.resize(static_cast<std::size_t>(3 * hw));
  s.mask.resize(static_cast<std::size_t>(hw));
  for (int64_t i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) {
      s.image[static_cast<std::size_t>(c * hw + i)] =
          static_cast<float>(rgb.pixels[static_cast<std::size_t>(i * rgb.channels + (rgb.channels == 3 ? c : 0))]) /
          255.0f;
    }
    s.mask[static_cast<std::size_t>(i)] = mask.pixels[static_cast<std::size_t>(i * mask.channels)] >= 128 ? 1 : 0;
  }
  return s;
}

Image8 image_to_rgb8(const SegSample& s) {
  Image8 img{s.width, s.height, 3, {}};
  const int64_t hw = s.plane();
  img.pixels.resize(static_cast<std::size_t>(3 * hw));
  for (int64_t i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(s.image[static_cast<std::size_t>(c * hw + i)], 0.0f, 1.0f);
      img.pixels[static_cast<std::size_t>(i * 3 + c)] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }
  }
  return img;
}

Image8 mask_to_gray8(const SegSample& s) {
  Image8 img{s.width, s.height, 1, {}};
  img.pixels.resize(s.mask.size());
  std::transform(s.mask.begin(), s.mask.end(), img.pixels.begin(),
                 [](uint8_t v) { return static_cast<uint8_t>(v ? 255 : 0); });
  return img;
}

SegSample resize(const SegSample& s, int64_t width, int64_t height) {
  if (width < 1 || height < 1) throw DataError("resize target must be positive");
  if (width == s.width && height == s.height) return s;
  SegSample out;
  out.id = s.id;
  out.width = width;
  out.height = height;
  const int64_t hw = width * height;
  out.image.resize(static_cast<std::size_t>(3 * hw));
  out.mask.resize(static_cast<std::size_t>(hw));
  const double sy = static_cast<double>(s.height) / static_cast<double>(height);
  const double sx = static_cast<double>(s.width) / static_cast<double>(width);
  for (int64_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(s.height - 1));
    const auto y0 = static_cast<int64_t>(std::floor(fy));
    const int64_t y1 = std::min(y0 + 1, s.height - 1);
    const double wy = fy - static_cast<double>(y0);
    const int64_t ny = std::min(static_cast<int64_t>((static_cast<double>(y) + 0.5) * sy), s.height - 1);
    for (int64_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(s.width - 1));
      const auto x0 = static_cast<int64_t>(std::floor(fx));
      const int64_t x1 = std::min(x0 + 1, s.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (int c = 0; c < 3; ++c) {
        const float* p = s.image.data() + c * s.plane();
        const double v = (1 - wy) * ((1 - wx) * p[y0 * s.width + x0] + wx * p[y0 * s.width + x1]) +
                         wy * ((1 - wx) * p[y1 * s.width + x0] + wx * p[y1 * s.width + x1]);
        out.image[static_cast<std::size_t>(c * hw + y * width + x)] = static_cast<float>(v);
      }
      const int64_t nx = std::min(static_cast<int64_t>((static_cast<double>(x) + 0.5) * sx), s.width - 1);
      out.mask[static_cast<std::size_t>(y * width + x)] = s.mask[static_cast<std::size_t>(ny * s.width + nx)];
    }
  }
  return out;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kNone: return "none";
  }
  return "none";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  if (s == "none") return Split::kNone;
  throw DataError("unknown split '" + s + "' (expected train, val or test)");
}

std::vector<std::string> DatasetManifest::ids_in(Split s) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i < splits.size() && splits[i] == s) out.push_back(ids[i]);
  }
  return out;
}

fs::path DatasetManifest::image_path(const std::string& id) const { return root / "images" / (id + ".png"); }
fs::path DatasetManifest::mask_path(const std::string& id) const { return root / "masks" / (id + ".png"); }

namespace {

std::set<std::string> png_stems(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("missing directory '" + dir.string() + "'");
  std::set<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.insert(e.path().stem().string());
  }
  return out;
}

}  // namespace

DatasetManifest load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root '" + root.string() + "' does not exist");
  const auto images = png_stems(root / "images");
  const auto masks = png_stems(root / "masks");
  DatasetManifest m;
  m.root = root;
  for (const auto& id : images) {
    if (masks.count(id)) {
      m.ids.push_back(id);
    } else {
      m.warnings.push_back("image '" + id + ".png' has no mask; excluded");
    }
  }
  for (const auto& id : masks) {
    if (!images.count(id)) m.warnings.push_back("mask '" + id + ".png' has no image; excluded");
  }
  if (m.ids.empty()) throw DataError("no image/mask pairs under '" + root.string() + "'");
  for (const auto& id : m.ids) {
    if (read_png_size(m.image_path(id)) != read_png_size(m.mask_path(id))) m.size_mismatches.push_back(id);
  }
  m.splits.assign(m.ids.size(), Split::kNone);
  return m;
}

DatasetManifest split(const DatasetManifest& m, SplitFractions f, uint64_t seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw DataError("split fractions must be non-negative and sum to 1");
  }
  std::vector<std::size_t> order(m.ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  const auto n = static_cast<double>(order.size());
  const auto n_train = static_cast<std::size_t>(std::llround(f.train * n));
  const auto n_val = std::min(order.size() - n_train, static_cast<std::size_t>(std::llround(f.val * n)));
  DatasetManifest out = m;
  out.seed = seed;
  out.fractions = f;
  out.splits.assign(m.ids.size(), Split::kTest);
  for (std::size_t k = 0; k < order.size(); ++k) {
    out.splits[order[k]] = k < n_train ? Split::kTrain : (k < n_train + n_val ? Split::kVal : Split::kTest);
  }
  return out;
}

std::string manifest_to_text(const DatasetManifest& m) {
  std::ostringstream os;
  os << "# seed=" << m.seed << '\n';
  os.precision(17);
  os << "# fractions=" << m.fractions.train << ',' << m.fractions.val << ',' << m.fractions.test << '\n';
  for (std::size_t i = 0; i < m.ids.size(); ++i) {
    os << m.ids[i] << '\t' << to_string(i < m.splits.size() ? m.splits[i] : Split::kNone) << '\n';
  }
  return os.str();
}

DatasetManifest manifest_from_text(const fs::path& root, const std::string& text) {
  DatasetManifest m;
  m.root = root;
  std::istringstream is(text);
  std::string line;
  std::vector<std::pair<std::string, Split>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("# seed=", 0) == 0) {
      m.seed = std::stoull(line.substr(7));
      continue;
    }
    if (line.rfind("# fractions=", 0) == 0) {
      std::istringstream fs(line.substr(12));
      char comma = 0;
      fs >> m.fractions.train >> comma >> m.fractions.val >> comma >> m.fractions.test;
      continue;
    }
    if (line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("manifest line without a tab: '" + line + "'");
    rows.emplace_back(line.substr(0, tab), parse_split(line.substr(tab + 1)));
  }
  std::sort(rows.begin(), rows.end());
  for (auto& [id, s] : rows) {
    m.ids.push_back(id);
    m.splits.push_back(s);
  }
  return m;
}

SegSample load_sample(const DatasetManifest& m, const std::string& id) {
  const Image8 rgb = read_png(m.image_path(id), 3);
  const Image8 mask = read_png(m.mask_path(id), 1);
  return sample_from_images(id, rgb, mask);
}

std::vector<SegSample> load_split(const DatasetManifest& m, Split s, int64_t width, int64_t height,
                                  std::vector<std::pair<std::string, std::string>>* skipped) {
  std::vector<SegSample> out;
  for (const auto& id : m.ids_in(s)) {
    try {
      SegSample sample = load_sample(m, id);
      if (width > 0 && height > 0) sample = resize(sample, width, height);
      out.push_back(std::move(sample));
    } catch (const std::runtime_error& e) {
      if (!skipped) throw;
      skipped->emplace_back(id, e.what());
    }
  }
  return out;
}

}  // namespace dseg
