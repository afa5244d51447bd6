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


#include "dseg/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dseg {

namespace {

const char* const kRunKeys[] = {"lr0",         "lr_min",         "epochs_per_cycle", "cycles",
                                "batch_size",  "image_width",    "image_height",     "seed",
                                "split_seed",  "train_fraction", "val_fraction",     "test_fraction",
                                "rotation_max_deg", "hflip_p",   "vflip_p",          "brightness",
                                "contrast",    "saturation",     "data",             "out"};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

RunConfig::RunConfig() { train.seed = 1; }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> all = [] {
    std::vector<std::string> k;
    std::istringstream model(model_config_to_text(ModelConfig{}));
    for (const auto& kv : parse_key_values(model.str())) k.push_back(kv.key);
    for (const char* r : kRunKeys) k.emplace_back(r);
    return k;
  }();
  return all;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (apply_model_key(model, key, value)) return;
  try {
    if (key == "lr0") train.lr0 = parse_double(value);
    else if (key == "lr_min") train.lr_min = parse_double(value);
    else if (key == "epochs_per_cycle") train.epochs_per_cycle = parse_int(value);
    else if (key == "cycles") train.cycles = parse_int(value);
    else if (key == "batch_size") train.batch_size = parse_int(value);
    else if (key == "image_width") train.image_width = parse_int(value);
    else if (key == "image_height") train.image_height = parse_int(value);
    else if (key == "seed") train.seed = parse_u64(value);
    else if (key == "split_seed") split_seed = parse_u64(value);
    else if (key == "train_fraction") fractions.train = parse_double(value);
    else if (key == "val_fraction") fractions.val = parse_double(value);
    else if (key == "test_fraction") fractions.test = parse_double(value);
    else if (key == "rotation_max_deg") train.augment.rotation_max_deg = parse_double(value);
    else if (key == "hflip_p") train.augment.hflip_p = parse_double(value);
    else if (key == "vflip_p") train.augment.vflip_p = parse_double(value);
    else if (key == "brightness") train.augment.brightness = parse_double(value);
    else if (key == "contrast") train.augment.contrast = parse_double(value);
    else if (key == "saturation") train.augment.saturation = parse_double(value);
    else if (key == "data") data = value;
    else if (key == "out") out = value;
    else throw ConfigError("unknown key '" + key + "'");
  } catch (const ConfigError& e) {
    if (std::string(e.what()).starts_with("unknown key")) throw;
    throw ConfigError(key + ": " + e.what());
  }
}

void RunConfig::apply_text(std::string_view text) {
  for (const auto& kv : parse_key_values(text)) {
    try {
      set(kv.key, kv.value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(kv.line) + ": " + e.what());
    }
  }
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  try {
    cfg.apply_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return cfg;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << model_config_to_text(model) << "lr0 = " << num(train.lr0) << '\n'
     << "lr_min = " << num(train.lr_min) << '\n'
     << "epochs_per_cycle = " << train.epochs_per_cycle << '\n'
     << "cycles = " << train.cycles << '\n'
     << "batch_size = " << train.batch_size << '\n'
     << "image_width = " << train.image_width << '\n'
     << "image_height = " << train.image_height << '\n'
     << "seed = " << train.seed << '\n'
     << "split_seed = " << split_seed << '\n'
     << "train_fraction = " << num(fractions.train) << '\n'
     << "val_fraction = " << num(fractions.val) << '\n'
     << "test_fraction = " << num(fractions.test) << '\n'
     << "rotation_max_deg = " << num(train.augment.rotation_max_deg) << '\n'
     << "hflip_p = " << num(train.augment.hflip_p) << '\n'
     << "vflip_p = " << num(train.augment.vflip_p) << '\n'
     << "brightness = " << num(train.augment.brightness) << '\n'
     << "contrast = " << num(train.augment.contrast) << '\n'
     << "saturation = " << num(train.augment.saturation) << '\n';
  return os.str();
}

std::string RunConfig::hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dseg
