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


#include "dseg/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <sstream>
#include <stdexcept>

#include <boost/multiprecision/cpp_int.hpp>

#include "dseg/ops.hpp"

namespace dseg {

namespace {

void check_same(int64_t h1, int64_t w1, int64_t h2, int64_t w2, const char* what) {
  if (h1 != h2 || w1 != w2) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + std::to_string(h1) + "x" +
                                std::to_string(w1) + " vs " + std::to_string(h2) + "x" + std::to_string(w2));
  }
}

double dice_from_counts(int64_t inter, int64_t a, int64_t b) {
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

int64_t BinMask::count() const {
  int64_t n = 0;
  for (uint8_t v : values) n += v;
  return n;
}

ProbMap prob_map_from(const Tensorf& t, int64_t n) {
  const Shape& s = t.shape();
  if (n < 0 || n >= s.n) throw std::out_of_range("batch index " + std::to_string(n) + " out of range");
  ProbMap p{s.h, s.w, std::vector<double>(static_cast<std::size_t>(s.plane()))};
  const float* src = t.data() + n * s.c * s.plane();
  for (int64_t i = 0; i < s.plane(); ++i) p.values[static_cast<std::size_t>(i)] = src[i];
  return p;
}

BinMask mask_of(const SegSample& s) { return BinMask{s.height, s.width, s.mask}; }

int quantize(double p) {
  const double v = std::floor(255.0 * p);
  if (!(v > 0)) return 0;
  if (v > 255) return 255;
  return static_cast<int>(v);
}

int otsu_threshold(const ProbMap& p) {
  using boost::multiprecision::int256_t;
  std::array<int64_t, 256> hist{};
  for (double v : p.values) ++hist[static_cast<std::size_t>(quantize(v))];
  int64_t n = 0, s = 0;
  for (int i = 0; i < 256; ++i) {
    n += hist[static_cast<std::size_t>(i)];
    s += i * hist[static_cast<std::size_t>(i)];
  }
  // Between-class variance at t is (S0*N - S*n0)^2 / (n0*n1) up to a constant
  // factor; fractions are compared by cross-multiplication.
  int best = -1;
  int256_t best_num = 0, best_den = 1;
  int64_t n0 = 0, s0 = 0;
  for (int t = 0; t < 255; ++t) {
    n0 += hist[static_cast<std::size_t>(t)];
    s0 += t * hist[static_cast<std::size_t>(t)];
    const int64_t n1 = n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const int256_t diff = int256_t(s0) * n - int256_t(s) * n0;
    const int256_t num = diff * diff;
    const int256_t den = int256_t(n0) * n1;
    if (best < 0 || num * best_den > best_num * den) {
      best = t;
      best_num = num;
      best_den = den;
    }
  }
  if (best >= 0) return best;
  for (int i = 0; i < 256; ++i) {
    if (hist[static_cast<std::size_t>(i)] > 0) return i;
  }
  return 0;
}

BinMask fill_holes(const BinMask& m, int connectivity) {
  if (connectivity != 4 && connectivity != 8) throw std::invalid_argument("connectivity must be 4 or 8");
  const int64_t h = m.height, w = m.width;
  std::vector<uint8_t> outside(m.values.size(), 0);
  std::deque<int64_t> queue;
  auto seed = [&](int64_t y, int64_t x) {
    const int64_t i = y * w + x;
    if (!m.values[static_cast<std::size_t>(i)] && !outside[static_cast<std::size_t>(i)]) {
      outside[static_cast<std::size_t>(i)] = 1;
      queue.push_back(i);
    }
  };
  for (int64_t x = 0; x < w; ++x) {
    seed(0, x);
    seed(h - 1, x);
  }
  for (int64_t y = 0; y < h; ++y) {
    seed(y, 0);
    seed(y, w - 1);
  }
  while (!queue.empty()) {
    const int64_t i = queue.front();
    queue.pop_front();
    const int64_t y = i / w, x = i % w;
    for (int64_t dy = -1; dy <= 1; ++dy) {
      for (int64_t dx = -1; dx <= 1; ++dx) {
        if ((dy == 0 && dx == 0) || (connectivity == 4 && dy != 0 && dx != 0)) continue;
        const int64_t yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        seed(yy, xx);
      }
    }
  }
  BinMask out{h, w, std::vector<uint8_t>(m.values.size())};
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = outside[i] ? 0 : 1;
  return out;
}

BinMask binarize(const ProbMap& p, int connectivity) {
  const int t = otsu_threshold(p);
  BinMask m{p.height, p.width, std::vector<uint8_t>(p.values.size())};
  for (std::size_t i = 0; i < p.values.size(); ++i) m.values[i] = quantize(p.values[i]) > t ? 1 : 0;
  return fill_holes(m, connectivity);
}

double dice(const BinMask& a, const BinMask& b) {
  check_same(a.height, a.width, b.height, b.width, "dice");
  int64_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    na += a.values[i];
    nb += b.values[i];
    inter += a.values[i] & b.values[i];
  }
  return dice_from_counts(inter, na, nb);
}

double iou(const BinMask& a, const BinMask& b) {
  check_same(a.height, a.width, b.height, b.width, "iou");
  int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    inter += a.values[i] & b.values[i];
    uni += a.values[i] | b.values[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double mae(const ProbMap& p, const BinMask& g) {
  check_same(p.height, p.width, g.height, g.width, "mae");
  if (p.values.empty()) return 0.0;
  double s = 0;
  for (std::size_t i = 0; i < p.values.size(); ++i) s += std::abs(p.values[i] - static_cast<double>(g.values[i]));
  return s / static_cast<double>(p.values.size());
}

double sweep_dice(const ProbMap& p, const BinMask& g) {
  check_same(p.height, p.width, g.height, g.width, "sweep_dice");
  std::array<double, 256> thr{};
  for (int t = 0; t < 256; ++t) thr[static_cast<std::size_t>(t)] = t / 255.0;
  // k = number of thresholds strictly below the pixel; the pixel is foreground
  // at threshold t iff t < k.
  std::array<int64_t, 257> pred_hist{}, hit_hist{};
  int64_t ng = 0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const auto k = std::lower_bound(thr.begin(), thr.end(), p.values[i]) - thr.begin();
    ++pred_hist[static_cast<std::size_t>(k)];
    if (g.values[i]) {
      ++hit_hist[static_cast<std::size_t>(k)];
      ++ng;
    }
  }
  // Suffix sums give |pred| and |pred & g| for each t.
  double total = 0;
  int64_t np = 0, inter = 0;
  for (int k = 256; k >= 1; --k) {
    np += pred_hist[static_cast<std::size_t>(k)];
    inter += hit_hist[static_cast<std::size_t>(k)];
    total += dice_from_counts(inter, np, ng);  // threshold t = k - 1
  }
  return total / 256.0;
}

ProbMap tta_predict(const Predictor& predict, const Tensorf& x) {
  const Shape& s = x.shape();
  if (s.n != 1) throw std::invalid_argument("tta_predict expects a single image, got batch " + std::to_string(s.n));
  ProbMap acc{s.h, s.w, std::vector<double>(static_cast<std::size_t>(s.plane()), 0.0)};
  for (int variant = 0; variant < 4; ++variant) {
    const bool h = variant & 1, v = variant & 2;
    Tensorf in = x;
    if (h) in = flip_horizontal(in);
    if (v) in = flip_vertical(in);
    Tensorf out = predict(in);
    if (out.shape() != Shape{1, 1, s.h, s.w}) {
      throw std::invalid_argument("predictor returned " + out.shape().str() + ", expected 1x1x" +
                                  std::to_string(s.h) + "x" + std::to_string(s.w));
    }
    if (v) out = flip_vertical(out);
    if (h) out = flip_horizontal(out);
    for (int64_t i = 0; i < s.plane(); ++i) acc.values[static_cast<std::size_t>(i)] += out.data()[i];
  }
  for (double& a : acc.values) a /= 4.0;
  return acc;
}

MetricsReport evaluate(const Predictor& predict, const std::vector<SegSample>& samples, const EvalOptions& opts) {
  MetricsReport report;
  int64_t passes = 0;
  const Predictor counted = [&](const Tensorf& x) {
    ++passes;
    return predict(x);
  };
  std::vector<const SegSample*> order;
  for (const SegSample& s : samples) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const SegSample* a, const SegSample* b) { return a->id < b->id; });
  for (const SegSample* s : order) {
    if (static_cast<int64_t>(s->image.size()) != 3 * s->plane() ||
        static_cast<int64_t>(s->mask.size()) != s->plane()) {
      report.skipped.emplace_back(s->id, "image and mask sizes differ");
      continue;
    }
    const Tensorf x = image_tensor(*s);
    const ProbMap p = opts.tta ? tta_predict(counted, x) : prob_map_from(counted(x));
    const BinMask g = mask_of(*s);
    const BinMask b = binarize(p, opts.connectivity);
    MetricsRow row{s->id, dice(b, g), iou(b, g), mae(p, g), std::nullopt};
    if (opts.sweep) row.sweep_dice = sweep_dice(p, g);
    report.rows.push_back(std::move(row));
  }
  report.forward_passes = passes;
  if (report.rows.empty()) throw std::runtime_error("no samples could be evaluated");
  double sd = 0, si = 0, sm = 0, ss = 0;
  for (const MetricsRow& r : report.rows) {
    sd += r.dice;
    si += r.iou;
    sm += r.mae;
    if (r.sweep_dice) ss += *r.sweep_dice;
  }
  const auto n = static_cast<double>(report.rows.size());
  report.mean_dice = sd / n;
  report.mean_iou = si / n;
  report.mean_mae = sm / n;
  if (opts.sweep) report.mean_sweep_dice = ss / n;
  return report;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  const bool sweep = mean_sweep_dice.has_value();
  os << "id,dice,iou,mae" << (sweep ? ",sweep_dice" : "") << '\n';
  for (const MetricsRow& r : rows) {
    os << r.id << ',' << pct(r.dice) << ',' << pct(r.iou) << ',' << pct(r.mae);
    if (sweep) os << ',' << pct(r.sweep_dice.value_or(0.0));
    os << '\n';
  }
  os << "mean," << pct(mean_dice) << ',' << pct(mean_iou) << ',' << pct(mean_mae);
  if (sweep) os << ',' << pct(*mean_sweep_dice);
  os << '\n';
  return os.str();
}

std::string MetricsReport::summary() const {
  std::ostringstream os;
  os << "images: " << rows.size() << '\n'
     << "dice: " << pct(mean_dice) << '\n'
     << "iou: " << pct(mean_iou) << '\n'
     << "mae: " << pct(mean_mae) << '\n';
  if (mean_sweep_dice) os << "sweep_dice: " << pct(*mean_sweep_dice) << '\n';
  os << "forward_passes: " << forward_passes << '\n';
  if (!config_hash.empty()) os << "config_hash: " << config_hash << '\n';
  if (!checkpoint_id.empty()) os << "checkpoint: " << checkpoint_id << '\n';
  os << "seed: " << seed << '\n';
  for (const auto& [id, why] : skipped) os << "skipped: " << id << " (" << why << ")\n";
  return os.str();
}

}  // namespace dseg
