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
#include <numeric>

#include "doctest.h"
#include "dseg/gradcheck.hpp"
#include "dseg/ops.hpp"
#include "oracles.hpp"

using namespace dseg;

namespace {

double dot(const Tensord& a, const Tensord& b) {
  return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

double max_abs_diff(const Tensord& a, const Tensord& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i) m = std::max(m, std::fabs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d small closed forms") {
  Tensord x(Shape{1, 1, 3, 3}, 1.0);
  Tensord w(Shape{1, 1, 2, 2}, 1.0);
  const Tensord y = conv2d(x, w, Tensord{});
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  for (double v : y.values()) CHECK(v == 4.0);

  Rng rng(5);
  const auto r = oracle::random_tensor<double>(rng, {2, 1, 4, 5});
  const Tensord id = conv2d(r, Tensord(Shape{1, 1, 1, 1}, 1.0), Tensord{});
  CHECK(max_abs_diff(id, r) == 0.0);
}

TEST_CASE("conv2d matches the six-loop oracle") {
  Rng rng(6);
  struct Case {
    Shape x;
    int c_out, k, stride, pad, dilation, groups;
  };
  const Case cases[] = {
      {{1, 2, 5, 5}, 3, 3, 2, 1, 1, 1},  {{2, 4, 7, 6}, 4, 3, 1, 1, 1, 4},  {{1, 3, 9, 9}, 2, 3, 1, 2, 2, 1},
      {{2, 4, 6, 8}, 6, 1, 1, 0, 1, 2},  {{1, 2, 8, 7}, 2, 3, 2, 4, 4, 2},  {{3, 1, 4, 4}, 5, 2, 2, 0, 1, 1},
  };
  for (const Case& c : cases) {
    const auto x = oracle::random_tensor<double>(rng, c.x);
    const auto w = oracle::random_tensor<double>(rng, {c.c_out, c.x.c / c.groups, c.k, c.k});
    const auto b = oracle::random_tensor<double>(rng, {1, c.c_out, 1, 1});
    const Tensord got = conv2d(x, w, b, ConvParams{c.stride, c.pad, c.dilation, c.groups});
    const Tensord want = oracle::conv2d(x, w, b, c.stride, c.pad, c.dilation, c.groups);
    REQUIRE(got.shape() == want.shape());
    CHECK(max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("conv2d rejects bad shapes naming the dimension") {
  Tensorf x(Shape{1, 3, 8, 8});
  CHECK_THROWS_WITH_AS(conv2d(x, Tensorf(Shape{4, 2, 3, 3}), Tensorf{}), doctest::Contains("c_in"), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensorf(Shape{4, 1, 3, 3}), Tensorf{}, ConvParams{1, 1, 1, 2}), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensorf(Shape{4, 3, 3, 3}), Tensorf{}, ConvParams{0, 1, 1, 1}), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensorf(Shape{4, 3, 3, 3}), Tensorf(Shape{1, 3, 1, 1})), ShapeError);
}

TEST_CASE("conv_transpose2d closed forms") {
  const Tensord one(Shape{1, 1, 1, 1}, 1.0);
  const Tensord y = conv_transpose2d(one, Tensord(Shape{1, 1, 2, 2}, 1.0), Tensord{}, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  for (double v : y.values()) CHECK(v == 1.0);
  const Tensord up = conv_transpose2d(Tensord(Shape{1, 1, 2, 2}, 1.0), Tensord(Shape{1, 1, 2, 2}, 1.0), Tensord{}, 2, 0);
  CHECK(up.shape() == Shape{1, 1, 4, 4});
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  Rng rng(7);
  struct Case {
    Shape x;
    int c_out, k, stride, pad;
  };
  const Case cases[] = {{{1, 2, 5, 5}, 3, 3, 2, 1}, {{2, 3, 8, 8}, 2, 2, 2, 0}, {{1, 1, 7, 9}, 4, 3, 1, 1},
                        {{2, 2, 9, 5}, 2, 3, 2, 0}, {{1, 3, 6, 6}, 1, 4, 2, 1}};
  for (const Case& c : cases) {
    const auto x = oracle::random_tensor<double>(rng, c.x);
    const auto w = oracle::random_tensor<double>(rng, {c.c_out, c.x.c, c.k, c.k});
    const Tensord cx = conv2d(x, w, Tensord{}, ConvParams{c.stride, c.pad, 1, 1});
    const auto y = oracle::random_tensor<double>(rng, cx.shape());
    const Tensord ty = conv_transpose2d(y, w, Tensord{}, c.stride, c.pad);
    // Output size of the transpose can exceed x when the forward discarded
    // trailing rows; compare only where x lives.
    double rhs = 0;
    for (int64_t n = 0; n < c.x.n; ++n)
      for (int64_t ch = 0; ch < c.x.c; ++ch)
        for (int64_t i = 0; i < std::min(c.x.h, ty.shape().h); ++i)
          for (int64_t j = 0; j < std::min(c.x.w, ty.shape().w); ++j) rhs += x.at(n, ch, i, j) * ty.at(n, ch, i, j);
    const double lhs = dot(cx, y);
    CHECK(std::fabs(lhs - rhs) <= 1e-10 * std::max(1.0, std::fabs(lhs)));

    // Same against the tape's input gradient of conv2d.
    auto xl = Tensord::leaf(c.x, std::vector<double>(x.values().begin(), x.values().end()));
    TapeScope<double> scope;
    backward(sum(mul(conv2d(xl, w, Tensord{}, ConvParams{c.stride, c.pad, 1, 1}), y)));
    for (int64_t n = 0; n < c.x.n; ++n)
      for (int64_t ch = 0; ch < c.x.c; ++ch)
        for (int64_t i = 0; i < std::min(c.x.h, ty.shape().h); ++i)
          for (int64_t j = 0; j < std::min(c.x.w, ty.shape().w); ++j) {
            const auto idx = static_cast<std::size_t>(((n * c.x.c + ch) * c.x.h + i) * c.x.w + j);
            CHECK(xl.grad()[idx] == doctest::Approx(ty.at(n, ch, i, j)).epsilon(1e-12));
          }
  }
}

TEST_CASE("batchnorm2d train mode normalises and updates running stats") {
  Rng rng(8);
  const auto x = oracle::random_tensor<double>(rng, {4, 3, 5, 5}, -2.0, 5.0);
  NormStats<double> stats{Tensord(Shape{1, 3, 1, 1}, 0.0), Tensord(Shape{1, 3, 1, 1}, 1.0)};
  const Tensord y = batchnorm2d(x, Tensord(Shape{1, 3, 1, 1}, 1.0), Tensord(Shape{1, 3, 1, 1}, 0.0), stats,
                                NormMode::kTrain, 0.1, 1e-5);
  for (int64_t c = 0; c < 3; ++c) {
    double m = 0, v = 0, xm = 0, xv = 0;
    const double cnt = 4 * 25;
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t i = 0; i < 25; ++i) {
        m += y.at(n, c, i / 5, i % 5);
        xm += x.at(n, c, i / 5, i % 5);
      }
    m /= cnt;
    xm /= cnt;
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t i = 0; i < 25; ++i) {
        v += std::pow(y.at(n, c, i / 5, i % 5) - m, 2);
        xv += std::pow(x.at(n, c, i / 5, i % 5) - xm, 2);
      }
    v /= cnt;
    CHECK(std::fabs(m) < 1e-5);
    CHECK(std::fabs(v - 1.0) < 1e-4);
    CHECK(stats.mean.at(0, c, 0, 0) == doctest::Approx(0.1 * xm));
    CHECK(stats.var.at(0, c, 0, 0) == doctest::Approx(0.9 + 0.1 * xv / (cnt - 1)));
  }
}

TEST_CASE("batchnorm2d closed forms and eval mode") {
  Rng rng(9);
  const auto x = oracle::random_tensor<double>(rng, {2, 2, 3, 3});
  NormStats<double> stats{Tensord(Shape{1, 2, 1, 1}, 0.5), Tensord(Shape{1, 2, 1, 1}, 4.0)};
  const Tensord five = batchnorm2d(x, Tensord(Shape{1, 2, 1, 1}, 0.0), Tensord(Shape{1, 2, 1, 1}, 5.0), stats,
                                   NormMode::kEval);
  for (double v : five.values()) CHECK(v == 5.0);
  const Tensord e = batchnorm2d(x, Tensord(Shape{1, 2, 1, 1}, 1.0), Tensord(Shape{1, 2, 1, 1}, 0.0), stats,
                                NormMode::kEval, 0.1, 1e-5);
  CHECK(e.at(1, 1, 2, 2) == doctest::Approx((x.at(1, 1, 2, 2) - 0.5) / std::sqrt(4.0 + 1e-5)));
  CHECK(stats.mean.at(0, 0, 0, 0) == 0.5);  // eval leaves stats alone
  CHECK_THROWS_AS(batchnorm2d(x, Tensord(Shape{1, 3, 1, 1}, 1.0), Tensord(Shape{1, 2, 1, 1}), stats, NormMode::kEval),
                  ShapeError);
}

TEST_CASE("elementwise and resampling contracts") {
  const Tensord r = relu(Tensord(Shape{1, 1, 1, 3}, std::vector<double>{-1, 0, 2}));
  CHECK(r.values()[0] == 0);
  CHECK(r.values()[1] == 0);
  CHECK(r.values()[2] == 2);

  const Tensord s = sigmoid(Tensord(Shape{1, 1, 1, 3}, std::vector<double>{-1000, 0, 1000}));
  CHECK(s.values()[0] >= 0);
  CHECK(s.values()[1] == 0.5);
  CHECK(s.values()[2] == 1.0);
  for (double v : s.values()) CHECK(std::isfinite(v));

  const Tensord c = bilinear_upsample2x(Tensord(Shape{1, 2, 3, 4}, 0.25));
  CHECK(c.shape() == Shape{1, 2, 6, 8});
  for (double v : c.values()) CHECK(v == doctest::Approx(0.25));
  const Tensord ramp = bilinear_upsample2x(Tensord(Shape{1, 1, 1, 2}, std::vector<double>{0, 1}));
  CHECK(ramp.values()[0] == 0.0);
  CHECK(ramp.values()[1] == 0.25);
  CHECK(ramp.values()[2] == 0.75);
  CHECK(ramp.values()[3] == 1.0);

  const Tensord cat = concat_channels(Tensord(Shape{1, 3, 4, 4}), Tensord(Shape{1, 1, 4, 4}));
  CHECK(cat.shape() == Shape{1, 4, 4, 4});
  CHECK_THROWS_AS(concat_channels(Tensord(Shape{1, 3, 4, 4}), Tensord(Shape{1, 1, 4, 5})), ShapeError);
  CHECK_THROWS_AS(add(Tensord(Shape{1, 3, 4, 4}), Tensord(Shape{1, 1, 4, 4})), ShapeError);
}

TEST_CASE("maxpool2d routes the gradient to the first maximum") {
  auto x = Tensord::leaf(Shape{1, 1, 2, 2}, {3, 3, 1, 3});
  TapeScope<double> scope;
  const Tensord y = maxpool2d(x, 2, 2);
  CHECK(y.item() == 3);
  backward(sum(y));
  CHECK(x.grad()[0] == 1);
  CHECK(x.grad()[1] == 0);
  CHECK(x.grad()[3] == 0);
}

TEST_CASE("bce_with_logits values") {
  Rng rng(10);
  const Tensord t(Shape{1, 1, 4, 4}, std::vector<double>{1, 0, 0, 1, 1, 1, 0, 0, 1, 0, 1, 0, 0, 0, 1, 1});
  CHECK(bce_with_logits(Tensord(Shape{1, 1, 4, 4}, 0.0), t).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Tensord sat(Shape{1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) sat.values()[i] = t.values()[i] > 0 ? 20.0 : -20.0;
  CHECK(bce_with_logits(sat, t).item() < 1e-8);

  const auto z = oracle::random_tensor<double>(rng, {1, 1, 4, 4}, -30.0, 30.0);
  double want = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    const double zi = z.values()[i];
    want += t.values()[i] > 0 ? std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi));
  }
  want /= 16;
  CHECK(bce_with_logits(z, t).item() == doctest::Approx(want).epsilon(1e-10));

  Tensord half(Shape{1, 1, 4, 4}, 0.5);
  CHECK_THROWS_AS(bce_with_logits(z, half), std::invalid_argument);
}

TEST_CASE("flips are involutions") {
  Rng rng(12);
  const auto x = oracle::random_tensor<double>(rng, {2, 3, 4, 5});
  CHECK(max_abs_diff(flip_horizontal(flip_horizontal(x)), x) == 0);
  CHECK(max_abs_diff(flip_vertical(flip_vertical(x)), x) == 0);
  CHECK(flip_horizontal(x).at(1, 2, 3, 0) == x.at(1, 2, 3, 4));
  CHECK(flip_vertical(x).at(1, 2, 0, 1) == x.at(1, 2, 3, 1));
}

TEST_CASE("grad check covers every primitive and catches a corrupted gradient") {
  for (const auto& op : grad_check_ops()) {
    CAPTURE(op);
    const GradCheckResult r = grad_check<double>(op);
    CHECK(r.passed);
    CHECK(r.trials >= 5);
    CHECK(r.max_rel_error < 1e-5);
  }
  GradCheckOptions bad;
  bad.corrupt_op = "conv2d";
  CHECK_FALSE(grad_check<double>("conv2d", bad).passed);
  CHECK(grad_check<double>("relu", bad).passed);
  CHECK_THROWS(grad_check<double>("no_such_op"));
}
