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


#include <benchmark/benchmark.h>

#include "dseg/composer.hpp"
#include "dseg/metrics.hpp"
#include "dseg/ops.hpp"
#include "dseg/trainer.hpp"

namespace {

using namespace dseg;

Tensorf filled(Shape s, Rng& rng) {
  Tensorf t(s);
  for (float& v : t.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

// Args: channels, height, width.
void BM_Conv3x3Forward(benchmark::State& state) {
  Rng rng(1);
  const int64_t c = state.range(0), h = state.range(1), w = state.range(2);
  const Tensorf x = filled({4, c, h, w}, rng);
  const Tensorf k = filled({c, c, 3, 3}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, Tensorf(), ConvParams{1, 1, 1, 1}));
  state.SetItemsProcessed(state.iterations() * 4 * c * c * 9 * h * w);
}
BENCHMARK(BM_Conv3x3Forward)->Args({8, 64, 80})->Args({32, 16, 20})->Args({64, 8, 10});

void BM_Conv3x3ForwardBackward(benchmark::State& state) {
  Rng rng(2);
  const int64_t c = state.range(0), h = state.range(1), w = state.range(2);
  Tensorf x = filled({4, c, h, w}, rng);
  Tensorf k = filled({c, c, 3, 3}, rng);
  x.set_requires_grad(true);
  k.set_requires_grad(true);
  for (auto _ : state) {
    TapeScope<float> scope;
    backward(sum(conv2d(x, k, Tensorf(), ConvParams{1, 1, 1, 1})));
    x.zero_grad();
    k.zero_grad();
  }
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Args({8, 64, 80})->Args({64, 8, 10});

// Arg: 0 single, 1 double.
void BM_TrainStep(benchmark::State& state) {
  ModelConfig cfg;
  cfg.double_net = state.range(0) != 0;
  ComposedModel model(cfg, 1);
  Rng rng(3);
  const Tensorf x = filled({4, 3, 64, 80}, rng);
  Tensorf y(Shape{4, 1, 64, 80});
  for (std::size_t i = 0; i < y.values().size(); ++i) y.values()[i] = (i / 80) % 7 == 0 ? 1.0f : 0.0f;
  for (auto _ : state) {
    TapeScope<float> scope;
    const ModelOutput out = model.forward(x, ForwardContext{NormMode::kTrain});
    const Tensorf loss = model.loss(out, y);
    scope.tape().backward(loss);
    sgd_step(model.params(), 1e-3);
    model.params().zero_grad();
  }
  state.counters["params"] = static_cast<double>(model.parameter_count());
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  ModelConfig cfg;
  cfg.double_net = true;
  const ComposedModel model(cfg, 1);
  Rng rng(4);
  const Tensorf x = filled({1, 3, 64, 80}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(x));
}
BENCHMARK(BM_Predict)->Unit(benchmark::kMillisecond);

void BM_Binarize(benchmark::State& state) {
  Rng rng(5);
  ProbMap p{64, 80, std::vector<double>(64 * 80)};
  for (double& v : p.values) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(binarize(p));
}
BENCHMARK(BM_Binarize);

}  // namespace

BENCHMARK_MAIN();
