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


// Flat `key = value` text used for config files and checkpoint metadata.

#ifndef DSEG_CONFIG_HPP_
#define DSEG_CONFIG_HPP_

#include <string>
#include <string_view>
#include <vector>

#include "dseg/composer.hpp"

namespace dseg {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// Splits text into key/value pairs. Blank lines and lines starting with '#'
/// are skipped; whitespace around keys and values is trimmed.
std::vector<KeyValue> parse_key_values(std::string_view text);

bool parse_bool(const std::string& v);
int parse_int(const std::string& v);
double parse_double(const std::string& v);
uint64_t parse_u64(const std::string& v);

/// Applies one model key. Returns false if `key` is not a model key.
bool apply_model_key(ModelConfig& cfg, const std::string& key, const std::string& value);
bool is_model_key(const std::string& key);

std::string model_config_to_text(const ModelConfig& cfg);
/// Reads the model keys of checkpoint metadata; other keys are ignored.
ModelConfig model_config_from_metadata(std::string_view metadata);

/// Value of `key` in key/value text, or `fallback`.
std::string metadata_value(std::string_view text, const std::string& key,
                           const std::string& fallback = {});

}  // namespace dseg

#endif  // DSEG_CONFIG_HPP_
