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


#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dseg/data.hpp"
#include "dseg/rng.hpp"

namespace dseg {

namespace fs = std::filesystem;

namespace {

struct Lesion {
  double cx, cy, ax, ay, cos_a, sin_a;
  std::array<double, 3> tint;
  double freq_x, freq_y, phase_x, phase_y, texture;

  // Normalised elliptical radius: 1 on the boundary.
  double radius(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = (dx * cos_a + dy * sin_a) / ax;
    const double v = (-dx * sin_a + dy * cos_a) / ay;
    return std::sqrt(u * u + v * v);
  }
};

}  // namespace

std::string synthetic_id(int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "synth_%05lld", static_cast<long long>(index));
  return buf;
}

std::pair<Image8, Image8> generate_synthetic(uint64_t seed, int64_t index, const SynthConfig& cfg) {
  if (cfg.width < 8 || cfg.height < 8) throw DataError("synthetic images must be at least 8x8");
  if (cfg.min_lesions < 1 || cfg.max_lesions < cfg.min_lesions) throw DataError("invalid lesion count range");
  Rng rng = Rng::derive(seed, {static_cast<uint64_t>(index)});
  const int64_t w = cfg.width, h = cfg.height, hw = w * h;
  const double W = static_cast<double>(w), H = static_cast<double>(h);

  // Background: base tone, linear gradient, two low-frequency folds, vignetting.
  const std::array<double, 3> base{rng.uniform(0.55, 0.75), rng.uniform(0.25, 0.40), rng.uniform(0.20, 0.35)};
  const double g_angle = rng.uniform(0, 2 * std::numbers::pi);
  const double g_amp = rng.uniform(0.05, 0.20);
  std::array<double, 4> fold{};
  for (double& f : fold) f = rng.uniform(0, 2 * std::numbers::pi);
  const double fold_freq = rng.uniform(0.05, 0.15);
  const double vignette = rng.uniform(0.2, 0.45);

  std::vector<double> rgb(static_cast<std::size_t>(3 * hw));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const double nx = (static_cast<double>(x) + 0.5) / W - 0.5;
      const double ny = (static_cast<double>(y) + 0.5) / H - 0.5;
      const double grad = g_amp * (nx * std::cos(g_angle) + ny * std::sin(g_angle));
      const double folds = 0.04 * std::sin(fold_freq * static_cast<double>(x) + fold[0]) *
                               std::cos(fold_freq * static_cast<double>(y) + fold[1]) +
                           0.03 * std::sin(fold_freq * 0.7 * static_cast<double>(x + y) + fold[2]);
      const double shade = 1.0 - vignette * (nx * nx + ny * ny) * 2.0;
      for (int c = 0; c < 3; ++c) {
        rgb[static_cast<std::size_t>(c * hw + y * w + x)] = (base[static_cast<std::size_t>(c)] + grad + folds) * shade;
      }
    }
  }

  const int n_lesions = static_cast<int>(rng.between(cfg.min_lesions, cfg.max_lesions));
  std::vector<Lesion> lesions;
  for (int i = 0; i < n_lesions; ++i) {
    Lesion l{};
    l.ax = 0.5 * W * rng.uniform(cfg.min_diameter, cfg.max_diameter);
    l.ay = 0.5 * W * rng.uniform(cfg.min_diameter, cfg.max_diameter);
    l.cx = rng.uniform(0.1 * W, 0.9 * W);
    l.cy = rng.uniform(0.1 * H, 0.9 * H);
    const double a = rng.uniform(0, std::numbers::pi);
    l.cos_a = std::cos(a);
    l.sin_a = std::sin(a);
    l.tint = {rng.uniform(1.10, 1.30), rng.uniform(0.95, 1.15), rng.uniform(0.80, 1.00)};
    l.freq_x = rng.uniform(0.6, 1.2);
    l.freq_y = rng.uniform(0.6, 1.2);
    l.phase_x = rng.uniform(0, 2 * std::numbers::pi);
    l.phase_y = rng.uniform(0, 2 * std::numbers::pi);
    l.texture = rng.uniform(0.03, 0.07);
    lesions.push_back(l);
  }

  Image8 mask{w, h, 1, std::vector<uint8_t>(static_cast<std::size_t>(hw), 0)};
  constexpr double kSoft = 0.15;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      for (const Lesion& l : lesions) {
        const double r = l.radius(px, py);
        if (r <= 1.0) mask.pixels[static_cast<std::size_t>(y * w + x)] = 255;
        const double alpha = std::clamp((1.0 - r) / kSoft + 0.5, 0.0, 1.0);
        if (alpha <= 0) continue;
        const double dome = 1.0 + 0.12 * std::max(0.0, 1.0 - r * r);
        const double tex = l.texture * std::sin(l.freq_x * px + l.phase_x) * std::sin(l.freq_y * py + l.phase_y);
        for (int c = 0; c < 3; ++c) {
          double& v = rgb[static_cast<std::size_t>(c * hw + y * w + x)];
          const double lesion = v * l.tint[static_cast<std::size_t>(c)] * dome + tex;
          v = (1 - alpha) * v + alpha * lesion;
        }
      }
    }
  }

  // Specular highlights: bright blobs that are not part of the mask.
  const int n_spec = static_cast<int>(rng.between(0, cfg.max_highlights));
  for (int i = 0; i < n_spec; ++i) {
    const double sx = rng.uniform(0, W), sy = rng.uniform(0, H);
    const double sr = rng.uniform(0.8, 2.5);
    const double strength = rng.uniform(0.7, 1.0);
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - sx, dy = static_cast<double>(y) + 0.5 - sy;
        const double g = strength * std::exp(-(dx * dx + dy * dy) / (2 * sr * sr));
        if (g < 1e-3) continue;
        for (int c = 0; c < 3; ++c) {
          double& v = rgb[static_cast<std::size_t>(c * hw + y * w + x)];
          v += (1.0 - v) * g;
        }
      }
    }
  }

  Image8 image{w, h, 3, std::vector<uint8_t>(static_cast<std::size_t>(3 * hw))};
  for (int64_t i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = rgb[static_cast<std::size_t>(c * hw + i)] + cfg.noise_sigma * rng.normal();
      image.pixels[static_cast<std::size_t>(i * 3 + c)] =
          static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  }
  return {std::move(image), std::move(mask)};
}

SegSample generate_synthetic_sample(uint64_t seed, int64_t index, const SynthConfig& cfg) {
  const auto [image, mask] = generate_synthetic(seed, index, cfg);
  return sample_from_images(synthetic_id(index), image, mask);
}

void gen_synthetic(const fs::path& root, int64_t n, const SynthConfig& cfg, uint64_t seed) {
  if (n < 1) throw DataError("n must be at least 1, got " + std::to_string(n));
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  for (int64_t i = 0; i < n; ++i) {
    const auto [image, mask] = generate_synthetic(seed, i, cfg);
    const std::string id = synthetic_id(i);
    write_png(root / "images" / (id + ".png"), image);
    write_png(root / "masks" / (id + ".png"), mask);
  }
}

}  // namespace dseg
