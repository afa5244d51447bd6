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


// dseg: synthetic data generation, training, evaluation, prediction and
// gradient verification.

#include <map>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "dseg/run_config.hpp"

int main(int argc, char** argv) {
  namespace cli = dseg::cli;
  CLI::App app{"dseg: single and double encoder-decoder polyp segmentation"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 success, 1 validation failure (bad arguments, bad config, failed check), "
      "2 runtime failure (I/O, diverged training).");

  cli::GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset (images/ and masks/).");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--n", gen.n, "Number of image/mask pairs")->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "Image size as WxH")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();

  cli::TrainArgs tr;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flag_values;
  auto* train_cmd = app.add_subcommand(
      "train", "Train a model. Settings come from defaults, then --config, then --set, then per-key flags.");
  train_cmd->add_option("--config", tr.config, "Flat `key = value` config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", tr.data, "Dataset root with images/ and masks/");
  train_cmd->add_option("--out", tr.out, "Output directory for best.ckpt, train_log.csv, manifest.tsv");
  train_cmd->add_option("--set", sets, "Override as key=value (repeatable)");
  for (const auto& key : dseg::RunConfig::keys()) {
    if (key == "data" || key == "out") continue;
    train_cmd->add_option("--" + key, flag_values[key], "Config key `" + key + "`");
  }

  cli::EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split; CSV values are x100.");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data, "Dataset root")->required();
  eval_cmd->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--manifest", ev.manifest, "Split manifest (default: recompute from checkpoint settings)");
  eval_cmd->add_option("--out", ev.out, "Write the CSV here instead of stdout");
  eval_cmd->add_flag("--tta", ev.tta, "Average predictions over four flips");
  eval_cmd->add_flag("--sweep-metric", ev.sweep, "Add the mean Dice over thresholds 0..255");

  cli::PredictArgs pr;
  auto* predict_cmd =
      app.add_subcommand("predict", "Write probability, mask and contour-overlay PNGs for one image.");
  predict_cmd->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--image", pr.image, "Input PNG")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", pr.out, "Output directory")->required();
  predict_cmd->add_flag("--tta", pr.tta, "Average predictions over four flips");

  cli::GradCheckArgs gc;
  auto* gc_cmd = app.add_subcommand("grad-check", "Finite-difference check of every differentiable primitive.");
  gc_cmd->add_option("--op", gc.op, "Primitive name or `all`")->capture_default_str();
  gc_cmd->add_option("--dtype", gc.dtype, "f64 (verification) or f32")->capture_default_str();
  gc_cmd->add_option("--corrupt-op", gc.corrupt_op, "Test hook: perturb this primitive's gradient")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::kOk : cli::kValidationFailure;
  }

  if (*gen_cmd) return cli::gen_data(gen);
  if (*train_cmd) {
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        std::cerr << "dseg train: --set expects key=value, got '" << s << "'\n";
        return cli::kValidationFailure;
      }
      tr.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& key : dseg::RunConfig::keys()) {
      auto it = flag_values.find(key);
      if (it != flag_values.end() && train_cmd->count("--" + key) > 0) tr.overrides.emplace_back(key, it->second);
    }
    return cli::train(tr);
  }
  if (*eval_cmd) return cli::eval(ev);
  if (*predict_cmd) return cli::predict(pr);
  if (*gc_cmd) return cli::grad_check(gc);
  return cli::kValidationFailure;
}
