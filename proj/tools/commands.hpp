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


#ifndef DSEG_TOOLS_COMMANDS_HPP_
#define DSEG_TOOLS_COMMANDS_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dseg::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kValidationFailure = 1;
inline constexpr int kRuntimeFailure = 2;

struct GenDataArgs {
  std::string out;
  int64_t n = 10;
  std::string size = "80x64";
  uint64_t seed = 0;
};

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::vector<std::pair<std::string, std::string>> overrides;  // in command-line order
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string manifest;
  std::string out;
  bool tta = false;
  bool sweep = false;
};

struct PredictArgs {
  std::string checkpoint;
  std::string image;
  std::string out;
  bool tta = false;
};

struct GradCheckArgs {
  std::string op = "all";
  std::string dtype = "f64";
  std::string corrupt_op;
};

int gen_data(const GenDataArgs& a);
int train(const TrainArgs& a);
int eval(const EvalArgs& a);
int predict(const PredictArgs& a);
int grad_check(const GradCheckArgs& a);

}  // namespace dseg::cli

#endif  // DSEG_TOOLS_COMMANDS_HPP_
