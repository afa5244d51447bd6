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


// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Pass criterion numbers as arguments to run
// a subset, e.g. `dseg_acceptance 1 4 7`.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "dseg/composer.hpp"
#include "dseg/gradcheck.hpp"
#include "dseg/image_io.hpp"
#include "dseg/metrics.hpp"
#include "dseg/trainer.hpp"
#include "oracles.hpp"

#ifndef DSEG_CLI_PATH
#error "DSEG_CLI_PATH must name the dseg executable"
#endif

using namespace dseg;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kFdStep = 1e-5;
constexpr double kGradTolerance = 1e-5;
constexpr int kGradShapes = 5;
constexpr double kGradBudgetSec = 60.0;
constexpr int kRandomCases = 100;
constexpr double kMetricTolerance = 1e-12;
constexpr double kLrTolerance = 1e-12;
constexpr double kTtaSymmetryTolerance = 1e-6;
constexpr double kAblationMinDice = 0.85;
constexpr double kAblationBudgetSec = 20 * 60;  // on 4 cores
constexpr int kAblationReferenceCores = 4;
constexpr double kAblationLr = 0.3;
constexpr uint64_t kAblationDataSeed = 2024;
constexpr double kSmokeBudgetSec = 180.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

unsigned cores() { return std::max(1u, std::thread::hardware_concurrency()); }

// Runs jobs on up to `threads` workers; job i writes only its own slot.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& job) {
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < std::min<std::size_t>(threads, n); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::vector<SegSample> synthetic_range(uint64_t seed, int64_t first, int64_t count, const SynthConfig& cfg = {}) {
  std::vector<SegSample> out;
  for (int64_t i = first; i < first + count; ++i) out.push_back(generate_synthetic_sample(seed, i, cfg));
  return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckOptions opts;
  opts.step = kFdStep;
  opts.tolerance = kGradTolerance;
  opts.trials = kGradShapes;
  std::string worst_op;
  double worst = 0;
  std::vector<std::string> failed;
  int min_trials = kGradShapes;
  for (const std::string& op : grad_check_ops()) {
    const GradCheckResult r = grad_check<double>(op, opts);
    min_trials = std::min(min_trials, r.trials);
    if (!r.passed) failed.push_back(op);
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_op = op;
    }
  }
  // The checker must be able to fail.
  GradCheckOptions corrupt = opts;
  corrupt.corrupt_op = grad_check_ops().front();
  const bool control_caught = !grad_check<double>(corrupt.corrupt_op, corrupt).passed;
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = failed.empty() && min_trials >= kGradShapes && control_caught && secs < kGradBudgetSec;
  o.detail = fmt("%zu primitives x %d shapes, worst %s %.2e (tol %.0e), negative control %s, %.1fs (budget %.0fs)",
                 grad_check_ops().size(), min_trials, worst_op.c_str(), worst, kGradTolerance,
                 control_caught ? "caught" : "MISSED", secs, kGradBudgetSec);
  for (const auto& f : failed) o.detail += "; failed: " + f;
  return o;
}

Outcome otsu_exact() {
  Rng rng(101);
  int mismatches = 0, cases = 0;
  for (int i = 0; i < kRandomCases; ++i) {
    const int64_t h = rng.between(1, 64), w = rng.between(1, 80);
    ProbMap p = oracle::random_map(rng, h, w);
    if (i % 3 == 1) {
      // Few distinct levels, so ties between thresholds are common.
      std::vector<double> levels;
      for (int k = 0, n = static_cast<int>(rng.between(2, 4)); k < n; ++k) levels.push_back(rng.uniform());
      for (double& v : p.values) v = levels[rng.below(levels.size())];
    }
    mismatches += otsu_threshold(p) != oracle::otsu(p);
    ++cases;
  }
  for (double v : {0.0, 1e-9, 0.25, 0.5, 127.0 / 255.0, 0.999, 1.0}) {
    const ProbMap p{16, 20, std::vector<double>(320, v)};
    mismatches += otsu_threshold(p) != oracle::otsu(p) || otsu_threshold(p) != quantize(v);
    ++cases;
  }
  return {mismatches == 0, fmt("%d/%d images agree with the exhaustive oracle (incl. 7 constant)", cases - mismatches, cases)};
}

Outcome hole_filling() {
  Rng rng(102);
  int bad_oracle = 0, bad_idem = 0, cases = 0;
  for (int i = 0; i < kRandomCases; ++i) {
    const int64_t h = rng.between(1, 64), w = rng.between(1, 80);
    const BinMask m = oracle::random_mask(rng, h, w, rng.uniform(0.1, 0.9));
    for (int conn : {4, 8}) {
      const BinMask f = fill_holes(m, conn);
      bad_oracle += !(f == oracle::fill_holes(m, conn));
      bad_idem += !(fill_holes(f, conn) == f);
      ++cases;
    }
  }
  return {bad_oracle == 0 && bad_idem == 0,
          fmt("%d masks x {4,8}-connectivity: %d oracle mismatches, %d idempotence failures", kRandomCases, bad_oracle,
              bad_idem)};
}

Outcome metric_oracles() {
  Rng rng(103);
  double worst = 0, worst_identity = 0;
  for (int i = 0; i < kRandomCases; ++i) {
    const int64_t h = rng.between(1, 64), w = rng.between(1, 80);
    const BinMask a = oracle::random_mask(rng, h, w, i < 5 ? 0.0 : rng.uniform());
    const BinMask b = oracle::random_mask(rng, h, w, i < 3 ? 0.0 : rng.uniform());
    const ProbMap p = oracle::random_map(rng, h, w);
    const double d = dice(a, b);
    worst = std::max({worst, std::fabs(d - oracle::dice(a, b)), std::fabs(iou(a, b) - oracle::iou(a, b)),
                      std::fabs(mae(p, b) - oracle::mae(p, b)), std::fabs(sweep_dice(p, b) - oracle::sweep_dice(p, b))});
    worst_identity = std::max(worst_identity, std::fabs(iou(a, b) - d / (2.0 - d)));
  }
  return {worst <= kMetricTolerance && worst_identity <= kMetricTolerance,
          fmt("%d pairs: max |metric - oracle| %.1e, max |iou - d/(2-d)| %.1e (tol %.0e)", kRandomCases, worst,
              worst_identity, kMetricTolerance)};
}

Outcome double_model_wiring() {
  ModelConfig cfg;
  cfg.double_net = true;
  ComposedModel model(cfg, 5);
  Rng rng(104);
  const Tensorf x = oracle::random_tensor<float>(rng, {1, 3, 64, 80}, 0.0, 1.0);
  const ModelOutput out = model.forward(x, ForwardContext{NormMode::kEval});
  const int in2 = model.encoder(2).config().in_channels;
  const int64_t stem_cin = model.params().find("enc2.stem.conv.weight").shape().c;
  const Tensorf before = model.predict(x);

  // Perturb one weight in the first and in the last layer of net1, one at a
  // time. Deep weights can sit behind units that ReLU silences at init.
  int changed = 0, tried = 0;
  for (const char* name : {"enc1.stem.conv.weight", "dec1.merge.weight"}) {
    Tensorf w = model.params().find(name);
    if (!w.defined()) continue;
    ++tried;
    const std::size_t k = w.values().size() / 2;
    const float saved = w.values()[k];
    w.values()[k] = saved + 0.05f;
    const Tensorf after = model.predict(x);
    w.values()[k] = saved;
    float diff = 0;
    for (std::size_t i = 0; i < after.values().size(); ++i)
      diff = std::max(diff, std::fabs(after.values()[i] - before.values()[i]));
    changed += diff > 0.0f;
  }
  const bool ok = in2 == 4 && stem_cin == 4 && out.second_input.shape().c == 4 && tried == 2 && changed == tried;
  return {ok, fmt("second encoder in_channels=%d, stem c_in=%lld, second input c=%lld; %d/%d net1 perturbations "
                   "changed the output",
                   in2, static_cast<long long>(stem_cin), static_cast<long long>(out.second_input.shape().c), changed,
                   tried)};
}

Outcome schedule() {
  TrainConfig cfg;  // lr0 0.01, lr_min 1e-8
  const double start = cosine_lr(0, 1000, cfg.lr0, cfg.lr_min);
  const double end = cosine_lr(1000, 1000, cfg.lr0, cfg.lr_min);

  cfg.cycles = 2;
  cfg.epochs_per_cycle = 2;
  cfg.image_width = 32;
  cfg.image_height = 32;
  cfg.seed = 1;
  SynthConfig sc;
  sc.width = 32;
  sc.height = 32;
  const auto train_set = synthetic_range(9, 0, 8, sc);
  const auto val_set = synthetic_range(9, 8, 4, sc);
  ModelConfig mc;
  mc.encoder.width = 4;
  mc.decoder.width = 4;
  const TrainResult r = train(mc, cfg, train_set, val_set);
  const std::size_t per_cycle = r.lr_trace.size() / 2;
  const LogRow* restart = nullptr;
  for (const LogRow& row : r.log)
    if (row.cycle == 2 && !restart) restart = &row;
  const double last_of_first = r.lr_trace[per_cycle - 1];
  const bool ok = std::fabs(start - 0.01) <= kLrTolerance && std::fabs(end - 1e-8) <= kLrTolerance && restart &&
                  std::fabs(restart->lr - 0.01) <= kLrTolerance && std::fabs(last_of_first - 1e-8) <= kLrTolerance &&
                  std::fabs(r.log.front().lr - 0.01) <= kLrTolerance;
  return {ok, fmt("cosine_lr endpoints %.17g, %.17g; 2-cycle log: cycle 1 ends at %.3g, cycle 2 row (step %lld) "
                  "lr %.17g",
                  start, end, last_of_first, restart ? static_cast<long long>(restart->step) : -1LL,
                  restart ? restart->lr : -1.0)};
}

Outcome tta() {
  ModelConfig cfg;
  cfg.double_net = true;
  const ComposedModel model(cfg, 6);
  // Left-right mirror-symmetric input.
  SegSample s = generate_synthetic_sample(77, 0, SynthConfig{});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < s.height; ++y)
      for (int64_t x = s.width / 2; x < s.width; ++x)
        s.image[static_cast<std::size_t>((c * s.height + y) * s.width + x)] =
            s.image[static_cast<std::size_t>((c * s.height + y) * s.width + (s.width - 1 - x))];
  int calls = 0;
  const Predictor counted = [&](const Tensorf& x) {
    ++calls;
    return model.predict(x);
  };
  const ProbMap p = tta_predict(counted, image_tensor(s));
  double worst = 0;
  for (int64_t y = 0; y < p.height; ++y)
    for (int64_t x = 0; x < p.width; ++x) worst = std::max(worst, std::fabs(p.at(y, x) - p.at(y, p.width - 1 - x)));
  EvalOptions opts;
  opts.tta = true;
  const MetricsReport report = evaluate(counted, {s, generate_synthetic_sample(77, 1, SynthConfig{})}, opts);
  const bool ok = report.forward_passes == 8 && worst <= kTtaSymmetryTolerance;
  return {ok && calls == 12, fmt("%d forward passes for one image, %lld for two in evaluate(); max |p - hflip(p)| "
                                 "%.1e (tol %.0e)",
                                 calls - static_cast<int>(report.forward_passes),
                                 static_cast<long long>(report.forward_passes), worst, kTtaSymmetryTolerance)};
}

Outcome ablation() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto train_set = synthetic_range(kAblationDataSeed, 0, 500);
  const auto val_set = synthetic_range(kAblationDataSeed, 500, 50);
  const auto test_set = synthetic_range(kAblationDataSeed, 550, 100);
  const uint64_t seeds[] = {1, 2, 3};

  struct Job {
    bool dbl;
    uint64_t seed;
    double val = 0, test = 0, secs = 0;
  };
  std::vector<Job> jobs;
  for (uint64_t s : seeds)
    for (bool d : {false, true}) jobs.push_back({d, s});

  const unsigned n_cores = cores();
  std::mutex io;
  parallel_for(jobs.size(), n_cores, [&](std::size_t i) {
    Job& j = jobs[i];
    const auto start = std::chrono::steady_clock::now();
    ModelConfig mc;  // res_like encoder, fpn_like decoder
    mc.double_net = j.dbl;
    TrainConfig tc;
    tc.cycles = 3;
    tc.epochs_per_cycle = 5;
    tc.lr0 = kAblationLr;
    tc.seed = j.seed;
    const TrainResult r = train(mc, tc, train_set, val_set);
    j.val = r.best_val_dice;
    j.test = mean_dice(*r.model, test_set);
    j.secs = seconds_since(start);
    std::lock_guard lock(io);
    std::printf("      ablation %-6s seed %llu: val %.4f test %.4f (%.0fs)\n", j.dbl ? "double" : "single",
                static_cast<unsigned long long>(j.seed), j.val, j.test, j.secs);
    std::fflush(stdout);
  });
  const double secs = seconds_since(t0);

  auto median = [&](bool dbl) {
    std::vector<double> v;
    for (const Job& j : jobs)
      if (j.dbl == dbl) v.push_back(j.test);
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double single = median(false), dbl = median(true);
  // The budget is stated for 4 cores; fewer cores get proportionally more time.
  const double budget =
      kAblationBudgetSec * kAblationReferenceCores / std::min<double>(kAblationReferenceCores, n_cores);
  const bool ok = dbl >= single && dbl >= kAblationMinDice && secs <= budget;
  return {ok, fmt("median test Dice double %.4f vs single %.4f (need double >= single and >= %.2f); %.0fs on %u "
                  "core(s), budget %.0fs",
                  dbl, single, kAblationMinDice, secs, n_cores, budget)};
}

Outcome determinism() {
  const auto train_set = synthetic_range(31, 0, 40);
  const auto val_set = synthetic_range(31, 40, 10);
  ModelConfig mc;
  mc.double_net = true;
  TrainConfig tc;
  tc.cycles = 1;
  tc.epochs_per_cycle = 2;
  tc.lr0 = kAblationLr;
  tc.seed = 7;
  // Two concurrent runs and one afterwards on the main thread.
  std::array<double, 3> dice_runs{};
  std::array<std::string, 3> bytes{};
  parallel_for(2, 2, [&](std::size_t i) {
    const TrainResult r = train(mc, tc, train_set, val_set);
    dice_runs[i] = r.best_val_dice;
    bytes[i] = r.best_checkpoint;
  });
  const TrainResult r = train(mc, tc, train_set, val_set);
  dice_runs[2] = r.best_val_dice;
  bytes[2] = r.best_checkpoint;
  const bool same_dice = dice_runs[0] == dice_runs[1] && dice_runs[1] == dice_runs[2];
  const bool same_bytes = bytes[0] == bytes[1] && bytes[1] == bytes[2] && !bytes[0].empty();
  return {same_dice && same_bytes, fmt("3 runs: best_val_dice %s (%.17g), checkpoints (%zu bytes) %s", same_dice ? "identical" : "DIFFER",
                                       dice_runs[0], bytes[0].size(), same_bytes ? "byte-identical" : "DIFFER")};
}

int shell(const std::string& args, std::string* output = nullptr) {
  const std::string cmd = std::string(DSEG_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return -1;
  std::string out;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  if (output) *output = out;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool valid_metrics_csv(const fs::path& p, std::string* why) {
  std::ifstream in(p);
  std::string line;
  if (!std::getline(in, line) || line != "id,dice,iou,mae") {
    *why = "bad header '" + line + "'";
    return false;
  }
  int rows = 0;
  bool saw_mean = false;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 4) {
      *why = "row with " + std::to_string(f.size()) + " fields";
      return false;
    }
    for (std::size_t i = 1; i < 4; ++i) {
      char* end = nullptr;
      const double v = std::strtod(f[i].c_str(), &end);
      if (*end != '\0' || !(v >= 0 && v <= 100)) {
        *why = "bad value '" + f[i] + "'";
        return false;
      }
    }
    saw_mean = f[0] == "mean";
    ++rows;
  }
  if (rows < 2 || !saw_mean) {
    *why = "missing sample rows or final mean row";
    return false;
  }
  return true;
}

Outcome smoke() {
  oracle::TempDir dir("acceptance_smoke");
  const fs::path data = dir.path() / "data", run = dir.path() / "run", pred = dir.path() / "pred";
  const fs::path csv = dir.path() / "metrics.csv";
  const auto t0 = std::chrono::steady_clock::now();
  std::string log;
  const std::pair<const char*, std::string> steps[] = {
      {"gen-data", "gen-data --out " + data.string() + " --n 40 --seed 11"},
      {"train", "train --data " + data.string() + " --out " + run.string() + " --cycles 1 --epochs_per_cycle 1"},
      {"eval", "eval --checkpoint " + (run / "best.ckpt").string() + " --data " + data.string() + " --out " +
                   csv.string()},
      {"predict", "predict --checkpoint " + (run / "best.ckpt").string() + " --image " +
                      (data / "images" / "synth_00000.png").string() + " --out " + pred.string()},
  };
  for (const auto& [name, args] : steps) {
    const int code = shell(args, &log);
    if (code != 0) return {false, fmt("%s exited %d: %s", name, code, log.c_str())};
  }
  const double secs = seconds_since(t0);
  std::string why;
  if (!valid_metrics_csv(csv, &why)) return {false, "metrics CSV invalid: " + why};
  for (const char* suffix : {"_prob.png", "_mask.png", "_overlay.png"}) {
    const fs::path p = pred / (std::string("synth_00000") + suffix);
    try {
      const Image8 img = read_png(p, 3);
      if (img.width != 80 || img.height != 64) return {false, p.filename().string() + " has the wrong size"};
    } catch (const std::exception& e) {
      return {false, std::string("unreadable PNG: ") + e.what()};
    }
  }
  return {secs < kSmokeBudgetSec,
          fmt("gen-data, train 1x1, eval, predict all exit 0; CSV and 3 PNGs valid; %.1fs (budget %.0fs)", secs,
              kSmokeBudgetSec)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"otsu exact", otsu_exact},
      {"hole filling", hole_filling},
      {"metric oracles", metric_oracles},
      {"double model wiring", double_model_wiring},
      {"cosine schedule", schedule},
      {"tta", tta},
      {"ablation", ablation},
      {"determinism", determinism},
      {"cli smoke", smoke},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    ++ran;
    failed += !o.pass;
    std::printf("%s  %2d %-20s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
