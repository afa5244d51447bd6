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


#include "dseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dseg/config.hpp"
#include "dseg/metrics.hpp"

namespace dseg {

namespace fs = std::filesystem;

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(name) + " must be in [0, 1]");
  };
  prob(hflip_p, "hflip_p");
  prob(vflip_p, "vflip_p");
  if (!(rotation_max_deg >= 0) || !(brightness >= 0) || !(contrast >= 0) || !(saturation >= 0)) {
    throw std::invalid_argument("augmentation ranges must be non-negative");
  }
  if (brightness >= 1 || contrast >= 1 || saturation >= 1) {
    throw std::invalid_argument("jitter ranges must be below 1");
  }
}

void TrainConfig::validate() const {
  if (!(lr0 > 0) || !(lr_min >= 0) || !(lr_min < lr0)) {
    throw std::invalid_argument("learning rates need 0 <= lr_min < lr0");
  }
  if (epochs_per_cycle < 1 || cycles < 1 || batch_size < 1) {
    throw std::invalid_argument("epochs_per_cycle, cycles and batch_size must be at least 1");
  }
  if (image_width < 1 || image_height < 1) throw std::invalid_argument("image size must be positive");
  augment.validate();
}

double cosine_lr(int64_t step_in_cycle, int64_t steps_per_cycle, double lr0, double lr_min) {
  if (steps_per_cycle < 1 || step_in_cycle < 0 || step_in_cycle > steps_per_cycle) {
    throw std::invalid_argument("cosine_lr needs 0 <= step (" + std::to_string(step_in_cycle) + ") <= steps (" +
                                std::to_string(steps_per_cycle) + ")");
  }
  if (step_in_cycle == 0) return lr0;
  if (step_in_cycle == steps_per_cycle) return lr_min;
  const double frac = static_cast<double>(step_in_cycle) / static_cast<double>(steps_per_cycle);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

void sgd_step(ParamStore& params, double lr) {
  if (!(lr > 0)) throw std::invalid_argument("learning rate must be positive, got " + std::to_string(lr));
  const auto step = static_cast<float>(lr);
  for (const auto& [name, t] : params.parameters()) {
    Tensorf p = t;
    if (!p.has_grad()) continue;
    auto v = p.values();
    auto g = p.grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= step * g[i];
  }
}

SegSample hflip(const SegSample& s) {
  SegSample out = s;
  const int64_t h = s.height, w = s.width;
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        out.image[static_cast<std::size_t>((c * h + y) * w + x)] = s.image[static_cast<std::size_t>((c * h + y) * w + (w - 1 - x))];
      }
    }
  }
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      out.mask[static_cast<std::size_t>(y * w + x)] = s.mask[static_cast<std::size_t>(y * w + (w - 1 - x))];
    }
  }
  return out;
}

SegSample vflip(const SegSample& s) {
  SegSample out = s;
  const int64_t h = s.height, w = s.width;
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t y = 0; y < h; ++y) {
      std::copy_n(s.image.begin() + (c * h + (h - 1 - y)) * w, w, out.image.begin() + (c * h + y) * w);
    }
  }
  for (int64_t y = 0; y < h; ++y) {
    std::copy_n(s.mask.begin() + (h - 1 - y) * w, w, out.mask.begin() + y * w);
  }
  return out;
}

namespace {

// Symmetric (edge-repeating) reflection of an integer index into [0, n).
int64_t reflect(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

SegSample rotate(const SegSample& s, double degrees) {
  if (degrees == 0.0) return s;
  SegSample out = s;
  const int64_t h = s.height, w = s.width, hw = s.plane();
  const double a = degrees * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cx = 0.5 * static_cast<double>(w) - 0.5, cy = 0.5 * static_cast<double>(h) - 0.5;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double sx = ca * dx + sa * dy + cx;
      const double sy = -sa * dx + ca * dy + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double wx = sx - fx, wy = sy - fy;
      const int64_t x0 = reflect(static_cast<int64_t>(fx), w), x1 = reflect(static_cast<int64_t>(fx) + 1, w);
      const int64_t y0 = reflect(static_cast<int64_t>(fy), h), y1 = reflect(static_cast<int64_t>(fy) + 1, h);
      for (int64_t c = 0; c < 3; ++c) {
        const float* p = s.image.data() + c * hw;
        const double v = (1 - wy) * ((1 - wx) * p[y0 * w + x0] + wx * p[y0 * w + x1]) +
                         wy * ((1 - wx) * p[y1 * w + x0] + wx * p[y1 * w + x1]);
        out.image[static_cast<std::size_t>(c * hw + y * w + x)] = static_cast<float>(v);
      }
      const int64_t nx = reflect(static_cast<int64_t>(std::lround(sx)), w);
      const int64_t ny = reflect(static_cast<int64_t>(std::lround(sy)), h);
      out.mask[static_cast<std::size_t>(y * w + x)] = s.mask[static_cast<std::size_t>(ny * w + nx)];
    }
  }
  return out;
}

SegSample augment(const SegSample& s, const AugmentConfig& cfg, Rng& rng) {
  const double angle = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
  const bool h = rng.uniform() < cfg.hflip_p;
  const bool v = rng.uniform() < cfg.vflip_p;
  const double brightness = rng.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness);
  const double contrast = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast);
  const double saturation = rng.uniform(1.0 - cfg.saturation, 1.0 + cfg.saturation);

  SegSample out = rotate(s, angle);
  if (h) out = hflip(out);
  if (v) out = vflip(out);
  if (brightness == 1.0 && contrast == 1.0 && saturation == 1.0) return out;

  const int64_t hw = out.plane();
  float* r = out.image.data();
  float* g = r + hw;
  float* b = g + hw;
  double mean_gray = 0;
  for (int64_t i = 0; i < hw; ++i) mean_gray += 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  mean_gray = hw > 0 ? brightness * mean_gray / static_cast<double>(hw) : 0.0;
  for (int64_t i = 0; i < hw; ++i) {
    double px[3] = {r[i] * brightness, g[i] * brightness, b[i] * brightness};
    for (double& c : px) c = (c - mean_gray) * contrast + mean_gray;
    const double gray = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    for (double& c : px) c = std::clamp(gray + (c - gray) * saturation, 0.0, 1.0);
    r[i] = static_cast<float>(px[0]);
    g[i] = static_cast<float>(px[1]);
    b[i] = static_cast<float>(px[2]);
  }
  return out;
}

std::string log_header() { return "cycle,epoch,step,lr,train_loss,val_dice"; }

std::string format_log_row(const LogRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d,%d,%lld,%.17g,%.17g,%.17g", r.cycle, r.epoch, static_cast<long long>(r.step),
                r.lr, r.train_loss, r.val_dice);
  return buf;
}

double mean_dice(const ComposedModel& model, const std::vector<SegSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("mean_dice on an empty set");
  constexpr std::size_t kChunk = 8;
  double total = 0;
  for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
    std::vector<const SegSample*> chunk;
    for (std::size_t i = begin; i < std::min(samples.size(), begin + kChunk); ++i) chunk.push_back(&samples[i]);
    const Tensorf x = make_batch(chunk).first;
    const Tensorf p = model.predict(x);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      total += dice(binarize(prob_map_from(p, static_cast<int64_t>(i))), mask_of(*chunk[i]));
    }
  }
  return total / static_cast<double>(samples.size());
}

namespace {

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

std::string log_text(int64_t params, const std::vector<LogRow>& log) {
  std::string text = "# params=" + std::to_string(params) + "\n" + log_header() + "\n";
  for (const LogRow& r : log) text += format_log_row(r) + "\n";
  return text;
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const std::vector<SegSample>& train_set,
                  const std::vector<SegSample>& val_set, const TrainOptions& opts) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("training split is empty");
  if (val_set.empty()) throw std::invalid_argument("validation split is empty");
  for (const auto* set : {&train_set, &val_set}) {
    for (const SegSample& s : *set) {
      if (s.width != cfg.image_width || s.height != cfg.image_height) {
        throw std::invalid_argument("sample '" + s.id + "' is " + std::to_string(s.width) + "x" +
                                    std::to_string(s.height) + ", expected " + std::to_string(cfg.image_width) +
                                    "x" + std::to_string(cfg.image_height));
      }
    }
  }
  if (opts.out_dir) fs::create_directories(*opts.out_dir);

  TrainResult result;
  result.model = std::make_unique<ComposedModel>(model_cfg, cfg.seed);
  ComposedModel& model = *result.model;
  result.parameter_count = model.parameter_count();

  const auto n = static_cast<int64_t>(train_set.size());
  const int64_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t steps_per_cycle = batches * cfg.epochs_per_cycle;
  // The last step of a cycle runs at lr_min; the next cycle restarts at lr0.
  const int64_t span = std::max<int64_t>(1, steps_per_cycle - 1);

  ParamStore::Snapshot best;
  int64_t global_step = 0;
  for (int cycle = 0; cycle < cfg.cycles; ++cycle) {
    for (int e = 0; e < cfg.epochs_per_cycle; ++e) {
      const int epoch = cycle * cfg.epochs_per_cycle + e;
      std::vector<int64_t> order(static_cast<std::size_t>(n));
      for (int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
      Rng shuffle = Rng::derive(cfg.seed, {static_cast<uint64_t>(epoch), 0x5u});
      for (int64_t i = n; i > 1; --i) {
        std::swap(order[static_cast<std::size_t>(i - 1)], order[shuffle.below(static_cast<uint64_t>(i))]);
      }

      LogRow row;
      row.cycle = cycle + 1;
      row.epoch = epoch + 1;
      row.step = global_step;
      double loss_sum = 0;
      for (int64_t b = 0; b < batches; ++b) {
        const int64_t step_in_cycle = static_cast<int64_t>(e) * batches + b;
        const double lr = steps_per_cycle == 1 ? cfg.lr0 : cosine_lr(step_in_cycle, span, cfg.lr0, cfg.lr_min);
        if (b == 0) row.lr = lr;

        std::vector<SegSample> batch;
        for (int64_t k = b * cfg.batch_size; k < std::min(n, (b + 1) * cfg.batch_size); ++k) {
          const int64_t idx = order[static_cast<std::size_t>(k)];
          Rng rng = Rng::derive(cfg.seed, {static_cast<uint64_t>(epoch), static_cast<uint64_t>(idx), 0xau});
          batch.push_back(augment(train_set[static_cast<std::size_t>(idx)], cfg.augment, rng));
        }
        std::vector<const SegSample*> ptrs;
        for (const SegSample& s : batch) ptrs.push_back(&s);
        const auto [x, y] = make_batch(ptrs);

        double loss_value = 0;
        {
          TapeScope<float> scope;
          const ModelOutput out = model.forward(x, ForwardContext{NormMode::kTrain});
          const Tensorf loss = model.loss(out, y);
          loss_value = loss.item();
          if (!std::isfinite(loss_value)) {
            throw TrainingError("non-finite loss at cycle " + std::to_string(cycle + 1) + ", epoch " +
                                std::to_string(epoch + 1) + ", step " + std::to_string(global_step) +
                                (best.empty() ? std::string("; no checkpoint was written")
                                              : "; best checkpoint from epoch " + std::to_string(result.best_epoch) +
                                                    " is kept"));
          }
          scope.tape().backward(loss);
        }
        sgd_step(model.params(), lr);
        model.params().zero_grad();
        result.lr_trace.push_back(lr);
        loss_sum += loss_value;
        ++global_step;
      }
      row.train_loss = loss_sum / static_cast<double>(batches);
      row.val_dice = mean_dice(model, val_set);
      result.log.push_back(row);

      if (row.val_dice > result.best_val_dice) {
        result.best_val_dice = row.val_dice;
        result.best_epoch = row.epoch;
        best = model.params().snapshot();
        char meta[128];
        std::snprintf(meta, sizeof(meta), "best_val_dice = %.17g\nbest_epoch = %d\nseed = %llu\n", row.val_dice,
                      row.epoch, static_cast<unsigned long long>(cfg.seed));
        result.best_checkpoint = model.to_checkpoint(meta + opts.extra_metadata).serialize();
        if (opts.out_dir) write_file(*opts.out_dir / "best.ckpt", result.best_checkpoint);
      }
      if (opts.out_dir) write_file(*opts.out_dir / "train_log.csv", log_text(result.parameter_count, result.log));
      if (opts.on_epoch) opts.on_epoch(row);
    }
  }
  model.params().restore(best);
  return result;
}

}  // namespace dseg
