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


#include <cmath>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "dseg/trainer.hpp"
#include "oracles.hpp"

using namespace dseg;

namespace {

SegSample random_sample(Rng& rng, int64_t h, int64_t w) {
  SegSample s{"s", h, w, std::vector<float>(static_cast<std::size_t>(3 * h * w)), std::vector<uint8_t>(static_cast<std::size_t>(h * w))};
  for (float& v : s.image) v = static_cast<float>(rng.uniform());
  for (uint8_t& v : s.mask) v = rng.bernoulli(0.3) ? 1 : 0;
  return s;
}

std::vector<SegSample> synth_set(uint64_t seed, int64_t first, int64_t n, int64_t w, int64_t h) {
  SynthConfig cfg;
  cfg.width = w;
  cfg.height = h;
  std::vector<SegSample> out;
  for (int64_t i = first; i < first + n; ++i) out.push_back(generate_synthetic_sample(seed, i, cfg));
  return out;
}

ModelConfig tiny_model(bool dbl) {
  ModelConfig m;
  m.encoder.width = 4;
  m.encoder.stages = 3;
  m.decoder.width = 4;
  m.double_net = dbl;
  return m;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.lr0 = 0.05;
  t.epochs_per_cycle = 2;
  t.cycles = 2;
  t.batch_size = 4;
  t.image_width = 16;
  t.image_height = 16;
  t.seed = 3;
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 10, 0.01, 1e-8) == 0.01);
  CHECK(cosine_lr(10, 10, 0.01, 1e-8) == 1e-8);
  CHECK(cosine_lr(5, 10, 0.01, 1e-8) == doctest::Approx((0.01 + 1e-8) / 2).epsilon(1e-14));
  for (int64_t s = 1; s <= 10; ++s) CHECK(cosine_lr(s, 10, 0.01, 1e-8) < cosine_lr(s - 1, 10, 0.01, 1e-8));
  CHECK(cosine_lr(3, 12, 1.0, 0.0) == doctest::Approx(0.5 * (1 + std::cos(std::numbers::pi / 4))));
  CHECK_THROWS_AS(cosine_lr(11, 10, 0.01, 1e-8), std::invalid_argument);
  CHECK_THROWS_AS(cosine_lr(-1, 10, 0.01, 1e-8), std::invalid_argument);
  CHECK_THROWS_AS(cosine_lr(0, 0, 0.01, 1e-8), std::invalid_argument);
}

TEST_CASE("sgd step") {
  ParamStore store;
  Tensorf a = store.add_parameter("a", Shape{1, 1, 1, 2}, {1.0f, 2.0f});
  Tensorf b = store.add_parameter("b", Shape{1, 1, 1, 1}, {5.0f});
  a.impl()->ensure_grad();
  a.grad()[0] = 10.0f;
  a.grad()[1] = -2.0f;
  sgd_step(store, 0.5);
  CHECK(a.values()[0] == 1.0f - 5.0f);
  CHECK(a.values()[1] == 3.0f);
  CHECK(b.values()[0] == 5.0f);
  CHECK_THROWS_AS(sgd_step(store, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(sgd_step(store, -1.0), std::invalid_argument);
}

TEST_CASE("flips are involutions and move mask with image") {
  Rng rng(41);
  const SegSample s = random_sample(rng, 5, 7);
  CHECK(hflip(hflip(s)).image == s.image);
  CHECK(vflip(vflip(s)).mask == s.mask);
  const SegSample h = hflip(s);
  CHECK(h.mask[0] == s.mask[6]);
  CHECK(h.image[7 * 5 + 0] == s.image[7 * 5 + 6]);
  const SegSample v = vflip(s);
  CHECK(v.mask[0] == s.mask[4 * 7]);
}

TEST_CASE("rotation") {
  Rng rng(42);
  const SegSample s = random_sample(rng, 6, 6);
  CHECK(rotate(s, 0.0).image == s.image);
  // A quarter turn of a square maps pixel centres onto pixel centres.
  const SegSample r = rotate(s, 90.0);
  for (int64_t y = 0; y < 6; ++y)
    for (int64_t x = 0; x < 6; ++x) {
      CHECK(r.mask[static_cast<std::size_t>(y * 6 + x)] == s.mask[static_cast<std::size_t>((5 - x) * 6 + y)]);
      CHECK(r.image[static_cast<std::size_t>(y * 6 + x)] ==
            doctest::Approx(s.image[static_cast<std::size_t>((5 - x) * 6 + y)]).epsilon(1e-5));
    }
  const SegSample odd = rotate(random_sample(rng, 9, 13), 13.0);
  for (uint8_t m : odd.mask) CHECK(m <= 1);
  for (float v : odd.image) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("augmentation") {
  Rng rng(43);
  const SegSample s = random_sample(rng, 8, 8);
  AugmentConfig off{0, 0, 0, 0, 0, 0};
  Rng a(1), b(1);
  const SegSample same = augment(s, off, a);
  CHECK(same.image == s.image);
  CHECK(same.mask == s.mask);
  augment(s, AugmentConfig{}, b);
  CHECK(a.next() == b.next());  // equal number of draws

  Rng c(2), d(2);
  const SegSample x = augment(s, AugmentConfig{}, c);
  const SegSample y = augment(s, AugmentConfig{}, d);
  CHECK(x.image == y.image);
  CHECK(x.mask == y.mask);
  for (float v : x.image) CHECK((v >= 0.0f && v <= 1.0f));

  AugmentConfig photometric_only{0, 0, 0, 0.2, 0.2, 0.2};
  Rng e(5);
  CHECK(augment(s, photometric_only, e).mask == s.mask);

  CHECK_THROWS_AS((AugmentConfig{-1, 0.5, 0.5, 0.2, 0.2, 0.2}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((AugmentConfig{15, 1.5, 0.5, 0.2, 0.2, 0.2}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((AugmentConfig{15, 0.5, 0.5, 1.2, 0.2, 0.2}.validate()), std::invalid_argument);
}

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.lr0 = 0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.lr_min = 0.1;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.cycles = 0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("log format") {
  CHECK(log_header() == "cycle,epoch,step,lr,train_loss,val_dice");
  CHECK(format_log_row(LogRow{1, 2, 30, 0.01, 0.5, 0.25}) == "1,2,30,0.01,0.5,0.25");
}

TEST_CASE("training loop schedule, logging and checkpoints") {
  const auto train_set = synth_set(1, 0, 10, 16, 16);
  const auto val_set = synth_set(1, 100, 4, 16, 16);
  oracle::TempDir dir("train");
  TrainOptions opts;
  opts.out_dir = dir.path();
  int callbacks = 0;
  opts.on_epoch = [&](const LogRow&) { ++callbacks; };
  opts.extra_metadata = "note = hello\n";
  const TrainConfig cfg = tiny_train();
  const TrainResult r = train(tiny_model(true), cfg, train_set, val_set, opts);

  // 10 samples at batch 4: three steps per epoch, six per cycle.
  REQUIRE(r.lr_trace.size() == 12);
  CHECK(r.lr_trace[0] == cfg.lr0);
  CHECK(r.lr_trace[5] == cfg.lr_min);
  CHECK(r.lr_trace[6] == cfg.lr0);
  CHECK(r.lr_trace[11] == cfg.lr_min);
  for (int i = 1; i < 6; ++i) CHECK(r.lr_trace[static_cast<std::size_t>(i)] < r.lr_trace[static_cast<std::size_t>(i - 1)]);

  REQUIRE(r.log.size() == 4);
  CHECK(callbacks == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r.log[i].epoch == static_cast<int>(i + 1));
    CHECK(r.log[i].cycle == static_cast<int>(i / 2 + 1));
    CHECK(r.log[i].step == static_cast<int64_t>(3 * i));
    CHECK(r.log[i].lr == r.lr_trace[3 * i]);
    CHECK(std::isfinite(r.log[i].train_loss));
  }
  double best = -1;
  int best_epoch = 0;
  for (const LogRow& row : r.log)
    if (row.val_dice > best) {
      best = row.val_dice;
      best_epoch = row.epoch;
    }
  CHECK(r.best_val_dice == best);
  CHECK(r.best_epoch == best_epoch);
  CHECK(r.parameter_count == r.model->parameter_count());
  // The returned model holds the best weights.
  CHECK(mean_dice(*r.model, val_set) == r.best_val_dice);

  CHECK(slurp(dir.path() / "best.ckpt") == r.best_checkpoint);
  const Checkpoint ck = Checkpoint::parse(r.best_checkpoint);
  CHECK(ck.metadata.find("note = hello") != std::string::npos);
  CHECK(ck.metadata.find("best_epoch = " + std::to_string(best_epoch)) != std::string::npos);
  const std::string log = slurp(dir.path() / "train_log.csv");
  CHECK(log.starts_with("# params=" + std::to_string(r.parameter_count) + "\ncycle,epoch,step,lr,train_loss,val_dice\n1,1,0,"));
  CHECK(std::count(log.begin(), log.end(), '\n') == 6);
}

TEST_CASE("training is deterministic") {
  const auto train_set = synth_set(2, 0, 6, 16, 16);
  const auto val_set = synth_set(2, 50, 3, 16, 16);
  TrainConfig cfg = tiny_train();
  cfg.cycles = 1;
  const TrainResult a = train(tiny_model(false), cfg, train_set, val_set);
  const TrainResult b = train(tiny_model(false), cfg, train_set, val_set);
  CHECK(a.best_val_dice == b.best_val_dice);
  CHECK(a.best_checkpoint == b.best_checkpoint);
  CHECK(a.lr_trace == b.lr_trace);
  cfg.seed = 4;
  const TrainResult c = train(tiny_model(false), cfg, train_set, val_set);
  CHECK(c.best_checkpoint != a.best_checkpoint);
}

TEST_CASE("one step per cycle uses the initial rate") {
  const auto train_set = synth_set(3, 0, 2, 16, 16);
  TrainConfig cfg = tiny_train();
  cfg.epochs_per_cycle = 1;
  cfg.cycles = 2;
  const TrainResult r = train(tiny_model(false), cfg, train_set, train_set);
  CHECK(r.lr_trace == std::vector<double>{cfg.lr0, cfg.lr0});
}

TEST_CASE("training input errors") {
  const auto good = synth_set(4, 0, 2, 16, 16);
  const auto wrong = synth_set(4, 0, 2, 24, 16);
  const TrainConfig cfg = tiny_train();
  CHECK_THROWS_AS(train(tiny_model(false), cfg, wrong, good), std::invalid_argument);
  CHECK_THROWS_AS(train(tiny_model(false), cfg, good, {}), std::invalid_argument);
  CHECK_THROWS_AS(train(tiny_model(false), cfg, {}, good), std::invalid_argument);

  auto poisoned = good;
  poisoned[0].image[0] = std::nanf("");
  TrainConfig quiet = cfg;
  quiet.augment = AugmentConfig{0, 0, 0, 0, 0, 0};
  CHECK_THROWS_WITH_AS(train(tiny_model(false), quiet, poisoned, good), doctest::Contains("non-finite loss"),
                       TrainingError);
}
