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


#include "dseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>

#include "dseg/ops.hpp"
#include "dseg/rng.hpp"

namespace dseg {

namespace {

template <typename T>
struct Case {
  std::vector<Tensor<T>> inputs;  // differentiated leaves
  std::function<Tensor<T>(const std::vector<Tensor<T>>&)> fn;
};

template <typename T>
Tensor<T> random_leaf(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(static_cast<std::size_t>(s.numel()));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>::leaf(s, std::move(v));
}

// Values bounded away from zero so relu has no kink within the FD step.
template <typename T>
Tensor<T> away_from_zero_leaf(Rng& rng, Shape s) {
  std::vector<T> v(static_cast<std::size_t>(s.numel()));
  for (auto& x : v) x = static_cast<T>((rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.05, 1.0));
  return Tensor<T>::leaf(s, std::move(v));
}

// Distinct values spaced >= 0.01 apart so max-pool ties cannot occur.
template <typename T>
Tensor<T> distinct_leaf(Rng& rng, Shape s) {
  const auto n = static_cast<std::size_t>(s.numel());
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<T> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<T>(0.02 * static_cast<double>(perm[i]) - 1.0);
  return Tensor<T>::leaf(s, std::move(v));
}

Shape random_shape(Rng& rng, int64_t min_hw = 2) {
  return Shape{rng.between(1, 2), rng.between(1, 4), rng.between(min_hw, 8), rng.between(min_hw, 8)};
}

template <typename T>
using Builder = std::function<Case<T>(Rng&)>;

template <typename T>
const std::map<std::string, Builder<T>>& builders() {
  static const std::map<std::string, Builder<T>> table = {
      {"conv2d",
       [](Rng& rng) {
         const int64_t groups = rng.bernoulli(0.5) ? 1 : 2;
         const int64_t c_in = groups * rng.between(1, 2);
         const int64_t c_out = groups * rng.between(1, 2);
         const int64_t k = rng.between(1, 3);
         ConvParams p{static_cast<int>(rng.between(1, 2)), static_cast<int>(rng.between(0, 1)),
                      static_cast<int>(rng.between(1, 2)), static_cast<int>(groups)};
         const int64_t span = p.dilation * (k - 1) + 1;
         const int64_t h = std::max<int64_t>(span, rng.between(3, 8));
         const int64_t w = std::max<int64_t>(span, rng.between(3, 8));
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, {rng.between(1, 2), c_in, h, w}),
                     random_leaf<T>(rng, {c_out, c_in / groups, k, k}),
                     random_leaf<T>(rng, {1, c_out, 1, 1})};
         c.fn = [p](const std::vector<Tensor<T>>& in) { return conv2d(in[0], in[1], in[2], p); };
         return c;
       }},
      {"conv2d_depthwise",
       [](Rng& rng) {
         const int64_t ch = rng.between(1, 4);
         ConvParams p{static_cast<int>(rng.between(1, 2)), 1, 1, static_cast<int>(ch)};
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, {rng.between(1, 2), ch, rng.between(3, 8), rng.between(3, 8)}),
                     random_leaf<T>(rng, {ch, 1, 3, 3}), random_leaf<T>(rng, {1, ch, 1, 1})};
         c.fn = [p](const std::vector<Tensor<T>>& in) { return conv2d(in[0], in[1], in[2], p); };
         return c;
       }},
      {"conv_transpose2d",
       [](Rng& rng) {
         const int64_t c_in = rng.between(1, 4), c_out = rng.between(1, 3);
         const int64_t k = rng.between(2, 3);
         const int stride = static_cast<int>(rng.between(1, 2));
         const int pad = static_cast<int>(rng.between(0, 1));
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, {rng.between(1, 2), c_in, rng.between(2, 4), rng.between(2, 4)}),
                     random_leaf<T>(rng, {c_in, c_out, k, k}), random_leaf<T>(rng, {1, c_out, 1, 1})};
         c.fn = [stride, pad](const std::vector<Tensor<T>>& in) {
           return conv_transpose2d(in[0], in[1], in[2], stride, pad);
         };
         return c;
       }},
      {"batchnorm2d_train",
       [](Rng& rng) {
         const Shape s = random_shape(rng);
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, s), random_leaf<T>(rng, {1, s.c, 1, 1}, 0.5, 1.5),
                     random_leaf<T>(rng, {1, s.c, 1, 1})};
         c.fn = [ch = s.c](const std::vector<Tensor<T>>& in) {
           NormStats<T> st{Tensor<T>({1, ch, 1, 1}, T(0)), Tensor<T>({1, ch, 1, 1}, T(1))};
           return batchnorm2d(in[0], in[1], in[2], st, NormMode::kTrain);
         };
         return c;
       }},
      {"batchnorm2d_eval",
       [](Rng& rng) {
         const Shape s = random_shape(rng, 1);
         std::vector<T> m(s.c), v(s.c);
         for (auto& x : m) x = static_cast<T>(rng.uniform(-0.5, 0.5));
         for (auto& x : v) x = static_cast<T>(rng.uniform(0.5, 2.0));
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, s), random_leaf<T>(rng, {1, s.c, 1, 1}, 0.5, 1.5),
                     random_leaf<T>(rng, {1, s.c, 1, 1})};
         c.fn = [m, v, ch = s.c](const std::vector<Tensor<T>>& in) {
           NormStats<T> st{Tensor<T>({1, ch, 1, 1}, m), Tensor<T>({1, ch, 1, 1}, v)};
           return batchnorm2d(in[0], in[1], in[2], st, NormMode::kEval);
         };
         return c;
       }},
      {"relu",
       [](Rng& rng) {
         Case<T> c;
         c.inputs = {away_from_zero_leaf<T>(rng, random_shape(rng, 1))};
         c.fn = [](const std::vector<Tensor<T>>& in) { return relu(in[0]); };
         return c;
       }},
      {"sigmoid",
       [](Rng& rng) {
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, random_shape(rng, 1), -4.0, 4.0)};
         c.fn = [](const std::vector<Tensor<T>>& in) { return sigmoid(in[0]); };
         return c;
       }},
      {"maxpool2d",
       [](Rng& rng) {
         const int k = static_cast<int>(rng.between(2, 3));
         const int s = static_cast<int>(rng.between(1, 2));
         Case<T> c;
         c.inputs = {distinct_leaf<T>(rng, random_shape(rng, 3))};
         c.fn = [k, s](const std::vector<Tensor<T>>& in) { return maxpool2d(in[0], k, s); };
         return c;
       }},
      {"bilinear_upsample2x",
       [](Rng& rng) {
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, random_shape(rng, 1))};
         c.fn = [](const std::vector<Tensor<T>>& in) { return bilinear_upsample2x(in[0]); };
         return c;
       }},
      {"concat_channels",
       [](Rng& rng) {
         const Shape a = random_shape(rng, 1);
         const Shape b{a.n, rng.between(1, 4), a.h, a.w};
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, a), random_leaf<T>(rng, b)};
         c.fn = [](const std::vector<Tensor<T>>& in) { return concat_channels(in[0], in[1]); };
         return c;
       }},
      {"slice_channels",
       [](Rng& rng) {
         const Shape s = random_shape(rng, 1);
         const int64_t begin = rng.between(0, s.c - 1);
         const int64_t count = rng.between(1, s.c - begin);
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, s)};
         c.fn = [begin, count](const std::vector<Tensor<T>>& in) {
           return slice_channels(in[0], begin, count);
         };
         return c;
       }},
      {"add",
       [](Rng& rng) {
         const Shape s = random_shape(rng, 1);
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, s), random_leaf<T>(rng, s)};
         c.fn = [](const std::vector<Tensor<T>>& in) { return add(in[0], in[1]); };
         return c;
       }},
      {"mul",
       [](Rng& rng) {
         const Shape s = random_shape(rng, 1);
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, s), random_leaf<T>(rng, s)};
         c.fn = [](const std::vector<Tensor<T>>& in) { return mul(in[0], in[1]); };
         return c;
       }},
      {"scale",
       [](Rng& rng) {
         const T f = static_cast<T>(rng.uniform(-2.0, 2.0));
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, random_shape(rng, 1))};
         c.fn = [f](const std::vector<Tensor<T>>& in) { return scale(in[0], f); };
         return c;
       }},
      {"sum",
       [](Rng& rng) {
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, random_shape(rng, 1))};
         c.fn = [](const std::vector<Tensor<T>>& in) { return sum(in[0]); };
         return c;
       }},
      {"mean",
       [](Rng& rng) {
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, random_shape(rng, 1))};
         c.fn = [](const std::vector<Tensor<T>>& in) { return mean(in[0]); };
         return c;
       }},
      {"global_avg_pool",
       [](Rng& rng) {
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, random_shape(rng, 1))};
         c.fn = [](const std::vector<Tensor<T>>& in) { return global_avg_pool(in[0]); };
         return c;
       }},
      {"broadcast_spatial",
       [](Rng& rng) {
         const Shape s{rng.between(1, 2), rng.between(1, 4), 1, 1};
         const int64_t h = rng.between(1, 8), w = rng.between(1, 8);
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, s)};
         c.fn = [h, w](const std::vector<Tensor<T>>& in) { return broadcast_spatial(in[0], h, w); };
         return c;
       }},
      {"bce_with_logits",
       [](Rng& rng) {
         const Shape s = random_shape(rng, 1);
         std::vector<T> t(static_cast<std::size_t>(s.numel()));
         for (auto& v : t) v = rng.bernoulli(0.5) ? T(1) : T(0);
         Tensor<T> target(s, std::move(t));
         Case<T> c;
         c.inputs = {random_leaf<T>(rng, s, -3.0, 3.0)};
         c.fn = [target](const std::vector<Tensor<T>>& in) { return bce_with_logits(in[0], target); };
         return c;
       }},
  };
  return table;
}

template <typename T>
double weighted_loss(const Case<T>& c, const Tensor<T>& weights) {
  const Tensor<T> y = c.fn(c.inputs);
  double acc = 0.0;
  for (int64_t i = 0; i < y.numel(); ++i) acc += static_cast<double>(y.data()[i]) * weights.data()[i];
  return acc;
}

}  // namespace

const std::vector<std::string>& grad_check_ops() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : builders<double>()) out.push_back(name);
    return out;
  }();
  return names;
}

template <typename T>
GradCheckResult grad_check(const std::string& op, const GradCheckOptions& options) {
  const auto& table = builders<T>();
  const auto it = table.find(op);
  if (it == table.end()) throw std::invalid_argument("grad_check: unknown primitive '" + op + "'");
  const bool corrupt = options.corrupt_op == op || options.corrupt_op == "all";

  GradCheckResult result;
  result.op = op;
  // Each op gets its own stream so adding an op never perturbs another's cases.
  uint64_t key = 0;
  for (char ch : op) key = key * 131 + static_cast<unsigned char>(ch);
  Rng rng = Rng::derive(options.seed, {key});

  for (int trial = 0; trial < options.trials; ++trial) {
    Case<T> c = it->second(rng);
    std::string shapes;
    for (const auto& t : c.inputs) shapes += (shapes.empty() ? "" : ",") + t.shape().str();
    result.shapes.push_back(shapes);

    // Output shape fixes the random weighting of the scalar objective.
    const Shape out_shape = c.fn(c.inputs).shape();
    std::vector<T> wv(static_cast<std::size_t>(out_shape.numel()));
    for (auto& v : wv) v = static_cast<T>(rng.uniform(-1.0, 1.0));
    const Tensor<T> weights(out_shape, std::move(wv));

    for (auto& t : c.inputs) t.zero_grad();
    {
      TapeScope<T> scope;
      const Tensor<T> loss = sum(mul(c.fn(c.inputs), weights));
      backward(loss);
    }

    for (auto& t : c.inputs) {
      const auto n = static_cast<std::size_t>(t.numel());
      std::vector<double> analytic(n, 0.0);
      if (t.has_grad()) {
        for (std::size_t i = 0; i < n; ++i) analytic[i] = t.grad()[i];
      }
      if (corrupt) {
        for (auto& a : analytic) a *= 1.01;
      }
      double max_diff = 0.0, max_a = 0.0, max_n = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const T saved = t.values()[i];
        t.values()[i] = static_cast<T>(saved + options.step);
        const double lp = weighted_loss(c, weights);
        t.values()[i] = static_cast<T>(saved - options.step);
        const double lm = weighted_loss(c, weights);
        t.values()[i] = saved;
        const double numeric = (lp - lm) / (2.0 * options.step);
        max_diff = std::max(max_diff, std::abs(analytic[i] - numeric));
        max_a = std::max(max_a, std::abs(analytic[i]));
        max_n = std::max(max_n, std::abs(numeric));
      }
      const double denom = std::max({max_a, max_n, 1e-12});
      result.max_rel_error = std::max(result.max_rel_error, max_diff / denom);
    }
    ++result.trials;
  }
  result.passed = result.max_rel_error < options.tolerance;
  return result;
}

template GradCheckResult grad_check<float>(const std::string&, const GradCheckOptions&);
template GradCheckResult grad_check<double>(const std::string&, const GradCheckOptions&);

}  // namespace dseg
