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


#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "dseg/checkpoint.hpp"
#include "dseg/composer.hpp"
#include "dseg/config.hpp"
#include "dseg/data.hpp"
#include "dseg/gradcheck.hpp"
#include "dseg/image_io.hpp"
#include "dseg/metrics.hpp"
#include "dseg/ops.hpp"
#include "dseg/run_config.hpp"
#include "dseg/trainer.hpp"

namespace dseg::cli {

namespace fs = std::filesystem;

namespace {

// Configuration and argument problems exit 1; everything else exits 2.
template <typename F>
int guarded(const char* command, F&& body) {
  try {
    return body();
  } catch (const std::invalid_argument& e) {
    std::cerr << "dseg " << command << ": " << e.what() << '\n';
    return kValidationFailure;
  } catch (const std::exception& e) {
    std::cerr << "dseg " << command << ": " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

std::pair<int64_t, int64_t> parse_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw std::invalid_argument("size must look like WxH, got '" + s + "'");
  const int w = parse_int(s.substr(0, x));
  const int h = parse_int(s.substr(x + 1));
  if (w < 8 || h < 8) throw std::invalid_argument("size must be at least 8x8, got '" + s + "'");
  return {w, h};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
}

std::string fnv_hex(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Run settings stored in checkpoint metadata; other keys are skipped.
RunConfig run_config_from_metadata(const std::string& metadata) {
  RunConfig cfg;
  const auto& known = RunConfig::keys();
  for (const auto& kv : parse_key_values(metadata)) {
    if (std::find(known.begin(), known.end(), kv.key) != known.end()) cfg.set(kv.key, kv.value);
  }
  return cfg;
}

std::string non_model_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& kv : parse_key_values(cfg.to_text())) {
    if (!is_model_key(kv.key)) out += kv.key + " = " + kv.value + "\n";
  }
  return out + "config_hash = " + cfg.hash() + "\n";
}

// Single-channel bilinear resize with half-pixel centres.
ProbMap resize_map(const ProbMap& p, int64_t width, int64_t height) {
  if (p.width == width && p.height == height) return p;
  ProbMap out{height, width, std::vector<double>(static_cast<std::size_t>(width * height))};
  const double sy = static_cast<double>(p.height) / static_cast<double>(height);
  const double sx = static_cast<double>(p.width) / static_cast<double>(width);
  for (int64_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(p.height - 1));
    const auto y0 = static_cast<int64_t>(fy);
    const int64_t y1 = std::min(y0 + 1, p.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (int64_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(p.width - 1));
      const auto x0 = static_cast<int64_t>(fx);
      const int64_t x1 = std::min(x0 + 1, p.width - 1);
      const double wx = fx - static_cast<double>(x0);
      out.values[static_cast<std::size_t>(y * width + x)] =
          (1 - wy) * ((1 - wx) * p.at(y0, x0) + wx * p.at(y0, x1)) + wy * ((1 - wx) * p.at(y1, x0) + wx * p.at(y1, x1));
    }
  }
  return out;
}

std::string tensor_key(const Tensorf& t) {
  return std::string(reinterpret_cast<const char*>(t.data()), static_cast<std::size_t>(t.numel()) * sizeof(float));
}

// Emits the ground truth of whichever known image it is given, in any of the
// four flip orientations. Used for checkpoints with `kind = oracle`.
Predictor oracle_predictor(const std::vector<SegSample>& samples) {
  auto table = std::make_shared<std::map<std::string, Tensorf>>();
  for (const SegSample& s : samples) {
    Tensorf x = image_tensor(s);
    Tensorf g(Shape{1, 1, s.height, s.width});
    std::transform(s.mask.begin(), s.mask.end(), g.data(), [](uint8_t v) { return static_cast<float>(v); });
    for (int variant = 0; variant < 4; ++variant) {
      Tensorf xi = x, gi = g;
      if (variant & 1) {
        xi = flip_horizontal(xi);
        gi = flip_horizontal(gi);
      }
      if (variant & 2) {
        xi = flip_vertical(xi);
        gi = flip_vertical(gi);
      }
      (*table)[tensor_key(xi)] = gi;
    }
  }
  return [table](const Tensorf& x) {
    const auto it = table->find(tensor_key(x));
    if (it == table->end()) throw std::runtime_error("oracle checkpoint given an unknown image");
    return it->second;
  };
}

}  // namespace

int gen_data(const GenDataArgs& a) {
  return guarded("gen-data", [&] {
    if (a.out.empty()) throw std::invalid_argument("--out is required");
    if (a.n < 1) throw std::invalid_argument("--n must be at least 1");
    SynthConfig cfg;
    std::tie(cfg.width, cfg.height) = parse_size(a.size);
    gen_synthetic(a.out, a.n, cfg, a.seed);
    const DatasetManifest m = load_dataset(a.out);
    double fg = 0;
    for (const auto& id : m.ids) {
      const SegSample s = load_sample(m, id);
      fg += static_cast<double>(s.foreground()) / static_cast<double>(s.plane());
    }
    std::printf("wrote %zu pairs to %s (%lldx%lld, seed %llu, mean foreground %.4f)\n", m.ids.size(),
                a.out.c_str(), static_cast<long long>(cfg.width), static_cast<long long>(cfg.height),
                static_cast<unsigned long long>(a.seed), fg / static_cast<double>(m.ids.size()));
    return kOk;
  });
}

int train(const TrainArgs& a) {
  return guarded("train", [&] {
    RunConfig cfg = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
    for (const auto& [k, v] : a.overrides) cfg.set(k, v);
    if (!a.data.empty()) cfg.data = a.data;
    if (!a.out.empty()) cfg.out = a.out;
    if (cfg.data.empty()) throw std::invalid_argument("no dataset: pass --data or set `data` in the config");
    if (cfg.out.empty()) throw std::invalid_argument("no output directory: pass --out or set `out` in the config");
    cfg.model.validate();
    cfg.train.validate();

    const fs::path out = cfg.out;
    fs::create_directories(out);
    DatasetManifest m = load_dataset(cfg.data);
    for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
    m = split(m, cfg.fractions, cfg.split_seed);
    write_text(out / "manifest.tsv", manifest_to_text(m));
    write_text(out / "config.txt", cfg.to_text());

    std::vector<std::pair<std::string, std::string>> skipped;
    const auto train_set = load_split(m, Split::kTrain, cfg.train.image_width, cfg.train.image_height, &skipped);
    const auto val_set = load_split(m, Split::kVal, cfg.train.image_width, cfg.train.image_height, &skipped);
    for (const auto& [id, why] : skipped) std::cerr << "warning: skipped " << id << ": " << why << '\n';
    std::printf("train=%zu val=%zu config_hash=%s\n", train_set.size(), val_set.size(), cfg.hash().c_str());

    TrainOptions opts;
    opts.out_dir = out;
    opts.extra_metadata = non_model_text(cfg);
    opts.on_epoch = [](const LogRow& r) {
      std::printf("%s\n", format_log_row(r).c_str());
      std::fflush(stdout);
    };
    const TrainResult r = dseg::train(cfg.model, cfg.train, train_set, val_set, opts);
    std::printf("params=%lld\n", static_cast<long long>(r.parameter_count));
    std::printf("best_val_dice=%.17g\n", r.best_val_dice);
    return kOk;
  });
}

int eval(const EvalArgs& a) {
  return guarded("eval", [&] {
    if (a.checkpoint.empty() || a.data.empty()) throw std::invalid_argument("--checkpoint and --data are required");
    Split which = Split::kNone;
    try {
      which = parse_split(a.split);
    } catch (const DataError& e) {
      throw std::invalid_argument(e.what());
    }
    const std::string bytes = read_file(a.checkpoint);
    const Checkpoint ck = Checkpoint::parse(bytes);
    const RunConfig cfg = run_config_from_metadata(ck.metadata);
    const bool oracle = metadata_value(ck.metadata, "kind") == "oracle";

    DatasetManifest m;
    if (!a.manifest.empty()) {
      m = manifest_from_text(a.data, read_file(a.manifest));
    } else {
      m = split(load_dataset(a.data), cfg.fractions, cfg.split_seed);
    }
    std::vector<std::pair<std::string, std::string>> skipped;
    const int64_t w = oracle ? 0 : cfg.train.image_width;
    const int64_t h = oracle ? 0 : cfg.train.image_height;
    const auto samples = load_split(m, which, w, h, &skipped);
    if (samples.empty()) throw std::invalid_argument("split '" + a.split + "' has no loadable samples");

    Predictor predict;
    std::unique_ptr<ComposedModel> model;
    if (oracle) {
      predict = oracle_predictor(samples);
    } else {
      model = std::make_unique<ComposedModel>(ComposedModel::from_checkpoint(ck));
      predict = [&model](const Tensorf& x) { return model->predict(x); };
    }
    EvalOptions opts;
    opts.tta = a.tta;
    opts.sweep = a.sweep;
    MetricsReport report = evaluate(predict, samples, opts);
    report.skipped.insert(report.skipped.begin(), skipped.begin(), skipped.end());
    report.config_hash = metadata_value(ck.metadata, "config_hash", "none");
    report.checkpoint_id = fs::path(a.checkpoint).filename().string() + "@" + fnv_hex(bytes);
    report.seed = cfg.train.seed;

    std::ostream& summary = a.out.empty() ? std::cerr : std::cout;
    if (a.out.empty()) {
      std::cout << report.to_csv();
    } else {
      write_text(a.out, report.to_csv());
    }
    summary << "split: " << a.split << '\n' << "tta: " << (a.tta ? "on" : "off") << '\n';
    summary << "passes_per_image: " << report.forward_passes / static_cast<int64_t>(report.rows.size()) << '\n';
    summary << report.summary();
    return kOk;
  });
}

int predict(const PredictArgs& a) {
  return guarded("predict", [&] {
    if (a.checkpoint.empty() || a.image.empty() || a.out.empty()) {
      throw std::invalid_argument("--checkpoint, --image and --out are required");
    }
    const Checkpoint ck = Checkpoint::load(a.checkpoint);
    if (metadata_value(ck.metadata, "kind") == "oracle") {
      throw std::invalid_argument("an oracle checkpoint cannot predict unseen images");
    }
    const RunConfig cfg = run_config_from_metadata(ck.metadata);
    const ComposedModel model = ComposedModel::from_checkpoint(ck);

    const Image8 rgb = read_png(a.image, 3);
    SegSample s;
    s.id = fs::path(a.image).stem().string();
    s.width = rgb.width;
    s.height = rgb.height;
    s.image.resize(static_cast<std::size_t>(3 * s.plane()));
    s.mask.assign(static_cast<std::size_t>(s.plane()), 0);
    for (int64_t i = 0; i < s.plane(); ++i) {
      for (int c = 0; c < 3; ++c) {
        s.image[static_cast<std::size_t>(c * s.plane() + i)] = rgb.pixels[static_cast<std::size_t>(3 * i + c)] / 255.0f;
      }
    }
    const SegSample in = resize(s, cfg.train.image_width, cfg.train.image_height);
    const Predictor fn = [&model](const Tensorf& x) { return model.predict(x); };
    const Tensorf x = image_tensor(in);
    const ProbMap small = a.tta ? tta_predict(fn, x) : prob_map_from(fn(x));
    const ProbMap p = resize_map(small, s.width, s.height);
    const BinMask b = binarize(p);

    const fs::path out = a.out;
    fs::create_directories(out);
    Image8 prob{s.width, s.height, 1, std::vector<uint8_t>(static_cast<std::size_t>(s.plane()))};
    Image8 mask = prob;
    Image8 overlay = rgb;
    for (int64_t y = 0; y < s.height; ++y) {
      for (int64_t xx = 0; xx < s.width; ++xx) {
        const auto i = static_cast<std::size_t>(y * s.width + xx);
        prob.pixels[i] = static_cast<uint8_t>(std::lround(std::clamp(p.values[i], 0.0, 1.0) * 255.0));
        mask.pixels[i] = b.values[i] ? 255 : 0;
        if (!b.values[i]) continue;
        // Contour: foreground with a 4-neighbour that is background or off-image.
        const bool edge = y == 0 || xx == 0 || y == s.height - 1 || xx == s.width - 1 || !b.at(y - 1, xx) ||
                          !b.at(y + 1, xx) || !b.at(y, xx - 1) || !b.at(y, xx + 1);
        if (edge) {
          overlay.pixels[3 * i] = 0;
          overlay.pixels[3 * i + 1] = 255;
          overlay.pixels[3 * i + 2] = 0;
        }
      }
    }
    write_png(out / (s.id + "_prob.png"), prob);
    write_png(out / (s.id + "_mask.png"), mask);
    write_png(out / (s.id + "_overlay.png"), overlay);
    std::printf("wrote %s_{prob,mask,overlay}.png to %s (foreground %lld px)\n", s.id.c_str(), a.out.c_str(),
                static_cast<long long>(b.count()));
    return kOk;
  });
}

int grad_check(const GradCheckArgs& a) {
  return guarded("grad-check", [&] {
    if (a.dtype != "f64" && a.dtype != "f32") throw std::invalid_argument("--dtype must be f64 or f32");
    std::vector<std::string> ops;
    if (a.op == "all") {
      ops = grad_check_ops();
    } else {
      const auto& known = grad_check_ops();
      if (std::find(known.begin(), known.end(), a.op) == known.end()) {
        throw std::invalid_argument("unknown op '" + a.op + "'");
      }
      ops.push_back(a.op);
    }
    GradCheckOptions opts;
    opts.corrupt_op = a.corrupt_op;
    bool ok = true;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& op : ops) {
      const GradCheckResult r = a.dtype == "f64" ? dseg::grad_check<double>(op, opts) : dseg::grad_check<float>(op, opts);
      std::printf("%-20s trials=%d max_rel_error=%.3e %s\n", r.op.c_str(), r.trials, r.max_rel_error,
                  r.passed ? "ok" : "FAIL");
      ok = ok && r.passed;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%zu primitives, %.2fs, %s\n", ops.size(), secs, ok ? "all passed" : "FAILED");
    return ok ? kOk : kValidationFailure;
  });
}

}  // namespace dseg::cli
