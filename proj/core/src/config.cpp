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


#include "dseg/config.hpp"

#include <charconv>
#include <sstream>

namespace dseg {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

const char* const kModelKeys[] = {"encoder",       "decoder",       "encoder2",     "decoder2",
                                  "double",        "bridge",        "loss_on_first", "deep_supervision",
                                  "width",         "stages",        "expansion",    "decoder_width",
                                  "aspp_dilations"};

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

std::vector<KeyValue> parse_key_values(std::string_view text) {
  std::vector<KeyValue> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                        std::string(line) + "'");
    }
    KeyValue kv{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), line_no};
    if (kv.key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

int parse_int(const std::string& v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return out;
}

uint64_t parse_u64(const std::string& v) {
  uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

bool is_model_key(const std::string& key) {
  for (const char* k : kModelKeys) {
    if (key == k) return true;
  }
  return false;
}

bool apply_model_key(ModelConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (key == "encoder") {
      cfg.encoder.family = parse_encoder_family(value);
    } else if (key == "decoder") {
      cfg.decoder.family = parse_decoder_family(value);
    } else if (key == "encoder2") {
      if (value.empty() || value == "same") cfg.encoder2.reset();
      else cfg.encoder2 = parse_encoder_family(value);
    } else if (key == "decoder2") {
      if (value.empty() || value == "same") cfg.decoder2.reset();
      else cfg.decoder2 = parse_decoder_family(value);
    } else if (key == "double") {
      cfg.double_net = parse_bool(value);
    } else if (key == "bridge") {
      cfg.bridge = parse_bridge(value);
    } else if (key == "loss_on_first") {
      cfg.loss_on_first = parse_bool(value);
    } else if (key == "deep_supervision") {
      cfg.decoder.deep_supervision = parse_bool(value);
    } else if (key == "width") {
      cfg.encoder.width = parse_int(value);
    } else if (key == "stages") {
      cfg.encoder.stages = parse_int(value);
    } else if (key == "expansion") {
      cfg.encoder.expansion = parse_int(value);
    } else if (key == "decoder_width") {
      cfg.decoder.width = parse_int(value);
    } else if (key == "aspp_dilations") {
      std::vector<int> d;
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) d.push_back(parse_int(std::string(trim(item))));
      if (d.empty()) throw ConfigError("aspp_dilations is empty");
      cfg.decoder.aspp_dilations = d;
    } else {
      return false;
    }
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
  return true;
}

std::string model_config_to_text(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "encoder = " << to_string(cfg.encoder.family) << '\n'
     << "decoder = " << to_string(cfg.decoder.family) << '\n'
     << "encoder2 = " << (cfg.encoder2 ? to_string(*cfg.encoder2) : "same") << '\n'
     << "decoder2 = " << (cfg.decoder2 ? to_string(*cfg.decoder2) : "same") << '\n'
     << "double = " << (cfg.double_net ? "true" : "false") << '\n'
     << "bridge = " << to_string(cfg.bridge) << '\n'
     << "loss_on_first = " << (cfg.loss_on_first ? "true" : "false") << '\n'
     << "deep_supervision = " << (cfg.decoder.deep_supervision ? "true" : "false") << '\n'
     << "width = " << cfg.encoder.width << '\n'
     << "stages = " << cfg.encoder.stages << '\n'
     << "expansion = " << cfg.encoder.expansion << '\n'
     << "decoder_width = " << cfg.decoder.width << '\n'
     << "aspp_dilations = " << join_ints(cfg.decoder.aspp_dilations) << '\n';
  return os.str();
}

ModelConfig model_config_from_metadata(std::string_view metadata) {
  ModelConfig cfg;
  for (const auto& kv : parse_key_values(metadata)) apply_model_key(cfg, kv.key, kv.value);
  return cfg;
}

std::string metadata_value(std::string_view text, const std::string& key, const std::string& fallback) {
  for (const auto& kv : parse_key_values(text)) {
    if (kv.key == key) return kv.value;
  }
  return fallback;
}

}  // namespace dseg
