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

#include "dseg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace dseg {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

[[noreturn]] void fail(const std::string& op, const std::string& what) {
  throw ShapeError(op + ": " + what);
}

std::string dim(const char* name, int64_t v) { return std::string(name) + "=" + std::to_string(v); }

template <typename T>
void require_defined(const char* op, const Tensor<T>& t, const char* name) {
  if (!t.defined()) fail(op, std::string(name) + " is undefined");
}

template <typename T>
std::shared_ptr<TensorData<T>> make_output(Shape s) {
  auto d = std::make_shared<TensorData<T>>();
  d->shape = s;
  d->values.assign(static_cast<std::size_t>(s.numel()), T(0));
  return d;
}

template <typename T>
std::vector<std::shared_ptr<TensorData<T>>> inputs_of(std::initializer_list<const Tensor<T>*> ts) {
  std::vector<std::shared_ptr<TensorData<T>>> out;
  for (const Tensor<T>* t : ts) {
    if (t != nullptr && t->defined()) out.push_back(t->impl());
  }
  return out;
}

// Geometry of a (possibly strided, padded, dilated) square-kernel window walk.
struct Window {
  int64_t channels, height, width;  // image being unfolded
  int64_t kernel, stride, pad, dilation;
  int64_t out_h, out_w;  // grid of window positions

  int64_t rows() const { return channels * kernel * kernel; }
  int64_t cols() const { return out_h * out_w; }
};

// Unfolds `img` (channels x height x width) into a rows() x cols() matrix.
template <typename T>
void im2col(const T* img, const Window& g, T* cols) {
  const int64_t P = g.cols();
  for (int64_t c = 0; c < g.channels; ++c) {
    const T* plane = img + c * g.height * g.width;
    for (int64_t ki = 0; ki < g.kernel; ++ki) {
      for (int64_t kj = 0; kj < g.kernel; ++kj) {
        T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * P;
        for (int64_t oh = 0; oh < g.out_h; ++oh) {
          const int64_t ih = oh * g.stride - g.pad + ki * g.dilation;
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + ih * g.width;
          const int64_t off = kj * g.dilation - g.pad;
          if (g.stride == 1) {
            const int64_t lo = std::clamp<int64_t>(-off, 0, g.out_w);
            const int64_t hi = std::clamp<int64_t>(g.width - off, lo, g.out_w);
            std::fill(dst, dst + lo, T(0));
            std::memcpy(dst + lo, src + lo + off, static_cast<std::size_t>(hi - lo) * sizeof(T));
            std::fill(dst + hi, dst + g.out_w, T(0));
          } else {
            for (int64_t ow = 0; ow < g.out_w; ++ow) {
              const int64_t iw = ow * g.stride + off;
              dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : T(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds `cols` back into `img`.
template <typename T>
void col2im(const T* cols, const Window& g, T* img) {
  const int64_t P = g.cols();
  for (int64_t c = 0; c < g.channels; ++c) {
    T* plane = img + c * g.height * g.width;
    for (int64_t ki = 0; ki < g.kernel; ++ki) {
      for (int64_t kj = 0; kj < g.kernel; ++kj) {
        const T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * P;
        for (int64_t oh = 0; oh < g.out_h; ++oh) {
          const int64_t ih = oh * g.stride - g.pad + ki * g.dilation;
          if (ih < 0 || ih >= g.height) continue;
          const T* src = row + oh * g.out_w;
          T* dst = plane + ih * g.width;
          const int64_t off = kj * g.dilation - g.pad;
          for (int64_t ow = 0; ow < g.out_w; ++ow) {
            const int64_t iw = ow * g.stride + off;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Window& g) {
  return g.kernel == 1 && g.stride == 1 && g.pad == 0;
}

template <typename T>
void check_bias(const char* op, const Tensor<T>& b, int64_t c_out) {
  if (!b.defined()) return;
  const Shape& s = b.shape();
  if (s.n != 1 || s.c != c_out || s.h != 1 || s.w != 1) {
    fail(op, "bias must be 1x" + std::to_string(c_out) + "x1x1, got " + s.str());
  }
}

template <typename T>
void add_bias(T* y, const T* b, int64_t n, int64_t c, int64_t plane) {
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t k = 0; k < c; ++k) {
      T* p = y + (i * c + k) * plane;
      const T v = b[k];
      for (int64_t j = 0; j < plane; ++j) p[j] += v;
    }
  }
}

template <typename T>
void bias_grad(const T* gy, T* gb, int64_t n, int64_t c, int64_t plane) {
  for (int64_t k = 0; k < c; ++k) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const T* p = gy + (i * c + k) * plane;
      for (int64_t j = 0; j < plane; ++j) acc += p[j];
    }
    gb[k] += static_cast<T>(acc);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, ConvParams p) {
  constexpr const char* op = "conv2d";
  require_defined(op, x, "input");
  require_defined(op, w, "weight");
  if (p.stride < 1) fail(op, dim("stride", p.stride) + " must be >= 1");
  if (p.dilation < 1) fail(op, dim("dilation", p.dilation) + " must be >= 1");
  if (p.pad < 0) fail(op, dim("pad", p.pad) + " must be >= 0");
  if (p.groups < 1) fail(op, dim("groups", p.groups) + " must be >= 1");
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  if (xs.c % p.groups != 0) {
    fail(op, "input channels " + dim("c_in", xs.c) + " not divisible by " + dim("groups", p.groups));
  }
  if (ws.n % p.groups != 0) {
    fail(op, "output channels " + dim("c_out", ws.n) + " not divisible by " + dim("groups", p.groups));
  }
  if (ws.c != xs.c / p.groups) {
    fail(op, "weight " + dim("c_in/groups", ws.c) + " does not match input " +
                 dim("c_in", xs.c) + " / " + dim("groups", p.groups));
  }
  if (ws.h != ws.w) fail(op, "kernel must be square, got " + ws.str());
  check_bias(op, b, ws.n);
  const int64_t k = ws.h;
  const int64_t span = p.dilation * (k - 1) + 1;
  if (xs.h + 2 * p.pad < span) fail(op, "kernel extent exceeds padded input " + dim("h", xs.h));
  if (xs.w + 2 * p.pad < span) fail(op, "kernel extent exceeds padded input " + dim("w", xs.w));

  const int64_t ho = (xs.h + 2 * p.pad - span) / p.stride + 1;
  const int64_t wo = (xs.w + 2 * p.pad - span) / p.stride + 1;
  const int64_t groups = p.groups;
  const int64_t cg = xs.c / groups;
  const int64_t og = ws.n / groups;
  const Window g{cg, xs.h, xs.w, k, p.stride, p.pad, p.dilation, ho, wo};
  const int64_t K = g.rows();
  const int64_t P = g.cols();
  const bool pointwise = is_pointwise(g);

  auto out = make_output<T>(Shape{xs.n, ws.n, ho, wo});
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(K * P));
  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t gi = 0; gi < groups; ++gi) {
      const T* img = x.data() + (n * xs.c + gi * cg) * xs.h * xs.w;
      const T* colp = img;
      if (!pointwise) {
        im2col(img, g, cols.data());
        colp = cols.data();
      }
      CMapMat<T> W(w.data() + gi * og * K, og, K);
      CMapMat<T> C(colp, K, P);
      MapMat<T> Y(out->values.data() + (n * ws.n + gi * og) * P, og, P);
      Y.noalias() = W * C;
    }
  }
  if (b.defined()) add_bias(out->values.data(), b.data(), xs.n, ws.n, P);

  if (should_record<T>({&x, &w, &b})) {
    auto xd = x.impl();
    auto wd = w.impl();
    auto bd = b.defined() ? b.impl() : nullptr;
    Tape<T>::active()->record(
        op, inputs_of<T>({&x, &w, &b}), out,
        [xd, wd, bd, g, groups, cg, og, K, P, pointwise](TensorData<T>& o) {
          const Shape xs = xd->shape;
          const int64_t c_out = wd->shape.n;
          const T* gy = o.grad.data();
          std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(K * P));
          std::vector<T> dcols(pointwise ? 0 : static_cast<std::size_t>(K * P));
          T* gx = xd->requires_grad ? xd->ensure_grad() : nullptr;
          T* gw = wd->requires_grad ? wd->ensure_grad() : nullptr;
          for (int64_t n = 0; n < xs.n; ++n) {
            for (int64_t gi = 0; gi < groups; ++gi) {
              CMapMat<T> dY(gy + (n * c_out + gi * og) * P, og, P);
              const T* img = xd->values.data() + (n * xs.c + gi * cg) * xs.h * xs.w;
              if (gw != nullptr) {
                const T* colp = img;
                if (!pointwise) {
                  im2col(img, g, cols.data());
                  colp = cols.data();
                }
                CMapMat<T> C(colp, K, P);
                MapMat<T> dW(gw + gi * og * K, og, K);
                dW.noalias() += dY * C.transpose();
              }
              if (gx != nullptr) {
                CMapMat<T> W(wd->values.data() + gi * og * K, og, K);
                T* gimg = gx + (n * xs.c + gi * cg) * xs.h * xs.w;
                if (pointwise) {
                  MapMat<T> dX(gimg, K, P);
                  dX.noalias() += W.transpose() * dY;
                } else {
                  MapMat<T> dC(dcols.data(), K, P);
                  dC.noalias() = W.transpose() * dY;
                  col2im(dcols.data(), g, gimg);
                }
              }
            }
          }
          if (bd && bd->requires_grad) bias_grad(gy, bd->ensure_grad(), xs.n, c_out, P);
        });
  }
  return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// conv_transpose2d

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                           int pad) {
  constexpr const char* op = "conv_transpose2d";
  require_defined(op, x, "input");
  require_defined(op, w, "weight");
  if (stride < 1) fail(op, dim("stride", stride) + " must be >= 1");
  if (pad < 0) fail(op, dim("pad", pad) + " must be >= 0");
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  if (ws.n != xs.c) {
    fail(op, "weight " + dim("c_in", ws.n) + " does not match input " + dim("c_in", xs.c));
  }
  if (ws.h != ws.w) fail(op, "kernel must be square, got " + ws.str());
  const int64_t c_out = ws.c;
  check_bias(op, b, c_out);
  const int64_t k = ws.h;
  const int64_t ho = (xs.h - 1) * stride - 2 * pad + k;
  const int64_t wo = (xs.w - 1) * stride - 2 * pad + k;
  if (ho < 1) fail(op, "output " + dim("h", ho) + " is empty");
  if (wo < 1) fail(op, "output " + dim("w", wo) + " is empty");

  // The output image is unfolded by a conv window whose positions are x's grid.
  const Window g{c_out, ho, wo, k, stride, pad, 1, xs.h, xs.w};
  const int64_t K = g.rows();
  const int64_t P = g.cols();
  const int64_t cin = xs.c;

  auto out = make_output<T>(Shape{xs.n, c_out, ho, wo});
  std::vector<T> cols(static_cast<std::size_t>(K * P));
  CMapMat<T> W(w.data(), cin, K);
  for (int64_t n = 0; n < xs.n; ++n) {
    CMapMat<T> X(x.data() + n * cin * P, cin, P);
    MapMat<T> C(cols.data(), K, P);
    C.noalias() = W.transpose() * X;
    col2im(cols.data(), g, out->values.data() + n * c_out * ho * wo);
  }
  if (b.defined()) add_bias(out->values.data(), b.data(), xs.n, c_out, ho * wo);

  if (should_record<T>({&x, &w, &b})) {
    auto xd = x.impl();
    auto wd = w.impl();
    auto bd = b.defined() ? b.impl() : nullptr;
    Tape<T>::active()->record(
        op, inputs_of<T>({&x, &w, &b}), out, [xd, wd, bd, g, K, P, cin, c_out](TensorData<T>& o) {
          const int64_t n_batch = xd->shape.n;
          const int64_t oplane = g.height * g.width;
          std::vector<T> dcols(static_cast<std::size_t>(K * P));
          T* gx = xd->requires_grad ? xd->ensure_grad() : nullptr;
          T* gw = wd->requires_grad ? wd->ensure_grad() : nullptr;
          CMapMat<T> W(wd->values.data(), cin, K);
          for (int64_t n = 0; n < n_batch; ++n) {
            im2col(o.grad.data() + n * c_out * oplane, g, dcols.data());
            CMapMat<T> dC(dcols.data(), K, P);
            if (gx != nullptr) {
              MapMat<T> dX(gx + n * cin * P, cin, P);
              dX.noalias() += W * dC;
            }
            if (gw != nullptr) {
              CMapMat<T> X(xd->values.data() + n * cin * P, cin, P);
              MapMat<T> dW(gw, cin, K);
              dW.noalias() += X * dC.transpose();
            }
          }
          if (bd && bd->requires_grad) bias_grad(o.grad.data(), bd->ensure_grad(), n_batch, c_out, oplane);
        });
  }
  return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// batchnorm2d

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      NormStats<T>& stats, NormMode mode, double momentum, double epsilon) {
  constexpr const char* op = "batchnorm2d";
  require_defined(op, x, "input");
  require_defined(op, gamma, "gamma");
  require_defined(op, beta, "beta");
  require_defined(op, stats.mean, "running mean");
  require_defined(op, stats.var, "running var");
  if (!(epsilon > 0.0)) fail(op, "epsilon must be > 0");
  const Shape xs = x.shape();
  const Tensor<T>* per_channel[] = {&gamma, &beta, &stats.mean, &stats.var};
  for (const Tensor<T>* t : per_channel) {
    if (t->numel() != xs.c) {
      fail(op, "per-channel parameter has " + dim("c", t->numel()) + ", input has " + dim("c", xs.c));
    }
  }
  const int64_t C = xs.c;
  const int64_t plane = xs.h * xs.w;
  const int64_t m = xs.n * plane;
  if (m == 0) fail(op, "empty input " + xs.str());

  std::vector<T> mu(C), inv(C);
  if (mode == NormMode::kTrain) {
    for (int64_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (int64_t n = 0; n < xs.n; ++n) {
        const T* p = x.data() + (n * C + c) * plane;
        for (int64_t j = 0; j < plane; ++j) s += p[j];
      }
      const double mean = s / static_cast<double>(m);
      double ss = 0.0;
      for (int64_t n = 0; n < xs.n; ++n) {
        const T* p = x.data() + (n * C + c) * plane;
        for (int64_t j = 0; j < plane; ++j) {
          const double d = p[j] - mean;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(m);
      mu[c] = static_cast<T>(mean);
      inv[c] = static_cast<T>(1.0 / std::sqrt(var + epsilon));
      const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
      T& rm = stats.mean.values()[c];
      T& rv = stats.var.values()[c];
      rm = static_cast<T>((1.0 - momentum) * rm + momentum * mean);
      rv = static_cast<T>((1.0 - momentum) * rv + momentum * unbiased);
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      mu[c] = stats.mean.values()[c];
      inv[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(stats.var.values()[c]) + epsilon));
    }
  }

  auto out = make_output<T>(xs);
  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const T* p = x.data() + (n * C + c) * plane;
      T* q = out->values.data() + (n * C + c) * plane;
      const T a = gamma.data()[c] * inv[c];
      const T s = beta.data()[c] - a * mu[c];
      for (int64_t j = 0; j < plane; ++j) q[j] = a * p[j] + s;
    }
  }

  if (should_record<T>({&x, &gamma, &beta})) {
    auto xd = x.impl();
    auto gd = gamma.impl();
    auto bd = beta.impl();
    const bool train = mode == NormMode::kTrain;
    Tape<T>::active()->record(
        op, inputs_of<T>({&x, &gamma, &beta}), out,
        [xd, gd, bd, mu, inv, train, C, plane, m](TensorData<T>& o) {
          const int64_t N = xd->shape.n;
          const T* gy = o.grad.data();
          const T* xv = xd->values.data();
          std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
          for (int64_t n = 0; n < N; ++n) {
            for (int64_t c = 0; c < C; ++c) {
              const T* p = xv + (n * C + c) * plane;
              const T* d = gy + (n * C + c) * plane;
              double s1 = 0.0, s2 = 0.0;
              for (int64_t j = 0; j < plane; ++j) {
                s1 += d[j];
                s2 += static_cast<double>(d[j]) * (p[j] - mu[c]) * inv[c];
              }
              sum_dy[c] += s1;
              sum_dy_xhat[c] += s2;
            }
          }
          if (gd->requires_grad) {
            T* gg = gd->ensure_grad();
            for (int64_t c = 0; c < C; ++c) gg[c] += static_cast<T>(sum_dy_xhat[c]);
          }
          if (bd->requires_grad) {
            T* gb = bd->ensure_grad();
            for (int64_t c = 0; c < C; ++c) gb[c] += static_cast<T>(sum_dy[c]);
          }
          if (!xd->requires_grad) return;
          T* gx = xd->ensure_grad();
          const double md = static_cast<double>(m);
          for (int64_t n = 0; n < N; ++n) {
            for (int64_t c = 0; c < C; ++c) {
              const T* p = xv + (n * C + c) * plane;
              const T* d = gy + (n * C + c) * plane;
              T* q = gx + (n * C + c) * plane;
              const double g = gd->values[c];
              if (train) {
                const double k = g * inv[c] / md;
                const double a = sum_dy[c];
                const double bcoef = sum_dy_xhat[c];
                for (int64_t j = 0; j < plane; ++j) {
                  const double xhat = (p[j] - mu[c]) * inv[c];
                  q[j] += static_cast<T>(k * (md * d[j] - a - xhat * bcoef));
                }
              } else {
                const T k = static_cast<T>(g * inv[c]);
                for (int64_t j = 0; j < plane; ++j) q[j] += k * d[j];
              }
            }
          }
        });
  }
  return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  require_defined("relu", x, "input");
  auto out = make_output<T>(x.shape());
  const T* p = x.data();
  T* q = out->values.data();
  const int64_t N = x.numel();
  for (int64_t i = 0; i < N; ++i) q[i] = p[i] < T(0) ? T(0) : p[i];  // NaN propagates
  if (should_record<T>({&x})) {
    auto xd = x.impl();
    Tape<T>::active()->record("relu", {xd}, out, [xd](TensorData<T>& o) {
      if (!xd->requires_grad) return;
      T* g = xd->ensure_grad();
      const std::size_t N = xd->values.size();
      for (std::size_t i = 0; i < N; ++i) {
        if (xd->values[i] > T(0)) g[i] += o.grad[i];
      }
    });
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  require_defined("sigmoid", x, "input");
  auto out = make_output<T>(x.shape());
  const T* p = x.data();
  T* q = out->values.data();
  const int64_t N = x.numel();
  for (int64_t i = 0; i < N; ++i) {
    const T z = p[i];
    if (z >= T(0)) {
      q[i] = T(1) / (T(1) + std::exp(-z));
    } else {
      const T e = std::exp(z);
      q[i] = e / (T(1) + e);
    }
  }
  if (should_record<T>({&x})) {
    auto xd = x.impl();
    Tape<T>::active()->record("sigmoid", {xd}, out, [xd](TensorData<T>& o) {
      if (!xd->requires_grad) return;
      T* g = xd->ensure_grad();
      const std::size_t N = o.values.size();
      for (std::size_t i = 0; i < N; ++i) {
        const T s = o.values[i];
        g[i] += o.grad[i] * s * (T(1) - s);
      }
    });
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined("add", a, "lhs");
  require_defined("add", b, "rhs");
  if (a.shape() != b.shape()) fail("add", "shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  auto out = make_output<T>(a.shape());
  const int64_t N = a.numel();
  for (int64_t i = 0; i < N; ++i) out->values[i] = a.data()[i] + b.data()[i];
  if (should_record<T>({&a, &b})) {
    auto ad = a.impl();
    auto bd = b.impl();
    Tape<T>::active()->record("add", {ad, bd}, out, [ad, bd](TensorData<T>& o) {
      for (auto* d : {ad.get(), bd.get()}) {
        if (!d->requires_grad) continue;
        T* g = d->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
      }
    });
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined("mul", a, "lhs");
  require_defined("mul", b, "rhs");
  if (a.shape() != b.shape()) fail("mul", "shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  auto out = make_output<T>(a.shape());
  const int64_t N = a.numel();
  for (int64_t i = 0; i < N; ++i) out->values[i] = a.data()[i] * b.data()[i];
  if (should_record<T>({&a, &b})) {
    auto ad = a.impl();
    auto bd = b.impl();
    Tape<T>::active()->record("mul", {ad, bd}, out, [ad, bd](TensorData<T>& o) {
      // Read both operands before either gradient buffer is touched; a and b
      // may alias.
      const std::size_t N = o.grad.size();
      if (ad->requires_grad) {
        T* g = ad->ensure_grad();
        for (std::size_t i = 0; i < N; ++i) g[i] += o.grad[i] * bd->values[i];
      }
      if (bd->requires_grad) {
        T* g = bd->ensure_grad();
        for (std::size_t i = 0; i < N; ++i) g[i] += o.grad[i] * ad->values[i];
      }
    });
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  require_defined("scale", x, "input");
  auto out = make_output<T>(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out->values[i] = x.data()[i] * factor;
  if (should_record<T>({&x})) {
    auto xd = x.impl();
    Tape<T>::active()->record("scale", {xd}, out, [xd, factor](TensorData<T>& o) {
      if (!xd->requires_grad) return;
      T* g = xd->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * factor;
    });
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  require_defined("sum", x, "input");
  auto out = make_output<T>(Shape{1, 1, 1, 1});
  double acc = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
  out->values[0] = static_cast<T>(acc);
  if (should_record<T>({&x})) {
    auto xd = x.impl();
    Tape<T>::active()->record("sum", {xd}, out, [xd](TensorData<T>& o) {
      if (!xd->requires_grad) return;
      T* g = xd->ensure_grad();
      const T d = o.grad[0];
      for (std::size_t i = 0; i < xd->values.size(); ++i) g[i] += d;
    });
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  require_defined("mean", x, "input");
  if (x.numel() == 0) fail("mean", "empty input");
  return scale(sum(x), static_cast<T>(1.0 / static_cast<double>(x.numel())));
}

// ---------------------------------------------------------------------------
// Pooling and resampling

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int kernel, int stride) {
  constexpr const char* op = "maxpool2d";
  require_defined(op, x, "input");
  if (kernel < 1) fail(op, dim("kernel", kernel) + " must be >= 1");
  if (stride < 1) fail(op, dim("stride", stride) + " must be >= 1");
  const Shape xs = x.shape();
  if (xs.h < kernel) fail(op, "input " + dim("h", xs.h) + " smaller than kernel");
  if (xs.w < kernel) fail(op, "input " + dim("w", xs.w) + " smaller than kernel");
  const int64_t ho = (xs.h - kernel) / stride + 1;
  const int64_t wo = (xs.w - kernel) / stride + 1;
  auto out = make_output<T>(Shape{xs.n, xs.c, ho, wo});
  std::vector<int64_t> arg(static_cast<std::size_t>(out->shape.numel()));
  for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
    const T* p = x.data() + nc * xs.h * xs.w;
    for (int64_t oh = 0; oh < ho; ++oh) {
      for (int64_t ow = 0; ow < wo; ++ow) {
        int64_t best = (oh * stride) * xs.w + ow * stride;
        for (int64_t i = 0; i < kernel; ++i) {
          for (int64_t j = 0; j < kernel; ++j) {
            const int64_t idx = (oh * stride + i) * xs.w + ow * stride + j;
            if (p[idx] > p[best]) best = idx;
          }
        }
        const int64_t o = (nc * ho + oh) * wo + ow;
        out->values[o] = p[best];
        arg[o] = nc * xs.h * xs.w + best;
      }
    }
  }
  if (should_record<T>({&x})) {
    auto xd = x.impl();
    Tape<T>::active()->record(op, {xd}, out, [xd, arg = std::move(arg)](TensorData<T>& o) {
      if (!xd->requires_grad) return;
      T* g = xd->ensure_grad();
      for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += o.grad[i];
    });
  }
  return Tensor<T>(out);
}

namespace {

struct LinearTap {
  int64_t i0, i1;
  double w0, w1;
};

std::vector<LinearTap> upsample_taps(int64_t in) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(2 * in));
  for (int64_t o = 0; o < 2 * in; ++o) {
    double src = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
    if (src < 0.0) src = 0.0;
    const auto i0 = static_cast<int64_t>(src);
    const int64_t i1 = i0 + (i0 < in - 1 ? 1 : 0);
    const double l1 = src - static_cast<double>(i0);
    taps[o] = LinearTap{i0, i1, 1.0 - l1, l1};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample2x(const Tensor<T>& x) {
  constexpr const char* op = "bilinear_upsample2x";
  require_defined(op, x, "input");
  const Shape xs = x.shape();
  if (xs.h < 1 || xs.w < 1) fail(op, "empty spatial extent " + xs.str());
  const int64_t ho = 2 * xs.h, wo = 2 * xs.w;
  const auto th = upsample_taps(xs.h);
  const auto tw = upsample_taps(xs.w);
  auto out = make_output<T>(Shape{xs.n, xs.c, ho, wo});
  for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
    const T* p = x.data() + nc * xs.h * xs.w;
    T* q = out->values.data() + nc * ho * wo;
    for (int64_t oh = 0; oh < ho; ++oh) {
      const LinearTap& a = th[oh];
      const T* r0 = p + a.i0 * xs.w;
      const T* r1 = p + a.i1 * xs.w;
      const T ha = static_cast<T>(a.w0), hb = static_cast<T>(a.w1);
      for (int64_t ow = 0; ow < wo; ++ow) {
        const LinearTap& b = tw[ow];
        const T wa = static_cast<T>(b.w0), wb = static_cast<T>(b.w1);
        q[oh * wo + ow] = ha * (wa * r0[b.i0] + wb * r0[b.i1]) + hb * (wa * r1[b.i0] + wb * r1[b.i1]);
      }
    }
  }
  if (should_record<T>({&x})) {
    auto xd = x.impl();
    Tape<T>::active()->record(op, {xd}, out, [xd, th, tw, ho, wo](TensorData<T>& o) {
      if (!xd->requires_grad) return;
      const Shape xs = xd->shape;
      T* g = xd->ensure_grad();
      for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
        T* p = g + nc * xs.h * xs.w;
        const T* d = o.grad.data() + nc * ho * wo;
        for (int64_t oh = 0; oh < ho; ++oh) {
          const LinearTap& a = th[oh];
          T* r0 = p + a.i0 * xs.w;
          T* r1 = p + a.i1 * xs.w;
          const T ha = static_cast<T>(a.w0), hb = static_cast<T>(a.w1);
          for (int64_t ow = 0; ow < wo; ++ow) {
            const LinearTap& b = tw[ow];
            const T v = d[oh * wo + ow];
            const T wa = static_cast<T>(b.w0), wb = static_cast<T>(b.w1);
            r0[b.i0] += ha * wa * v;
            r0[b.i1] += ha * wb * v;
            r1[b.i0] += hb * wa * v;
            r1[b.i1] += hb * wb * v;
          }
        }
      }
    });
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> upsample_to(const Tensor<T>& x, int64_t h, int64_t w) {
  require_defined("upsample_to", x, "input");
  Tensor<T> y = x;
  while (y.shape().h < h && y.shape().w < w) y = bilinear_upsample2x(y);
  if (y.shape().h != h || y.shape().w != w) {
    fail("upsample_to", "cannot reach " + dim("h", h) + " " + dim("w", w) + " from " +
                            x.shape().str() + " by 2x steps");
  }
  return y;
}

// ---------------------------------------------------------------------------
// Channel plumbing

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  constexpr const char* op = "concat_channels";
  if (parts.empty()) fail(op, "no inputs");
  for (const auto& t : parts) require_defined(op, t, "input");
  const Shape s0 = parts[0].shape();
  int64_t c_total = 0;
  for (const auto& t : parts) {
    const Shape s = t.shape();
    if (s.n != s0.n) fail(op, "batch mismatch " + dim("n", s.n) + " vs " + dim("n", s0.n));
    if (s.h != s0.h) fail(op, "height mismatch " + dim("h", s.h) + " vs " + dim("h", s0.h));
    if (s.w != s0.w) fail(op, "width mismatch " + dim("w", s.w) + " vs " + dim("w", s0.w));
    c_total += s.c;
  }
  const int64_t plane = s0.h * s0.w;
  auto out = make_output<T>(Shape{s0.n, c_total, s0.h, s0.w});
  for (int64_t n = 0; n < s0.n; ++n) {
    T* dst = out->values.data() + n * c_total * plane;
    for (const auto& t : parts) {
      const int64_t len = t.shape().c * plane;
      std::copy_n(t.data() + n * len, len, dst);
      dst += len;
    }
  }
  bool record = false;
  for (const auto& t : parts) record = record || should_record<T>({&t});
  if (record) {
    std::vector<std::shared_ptr<TensorData<T>>> ins;
    for (const auto& t : parts) ins.push_back(t.impl());
    Tape<T>::active()->record(op, ins, out, [ins, c_total, plane](TensorData<T>& o) {
      const int64_t N = o.shape.n;
      int64_t c_off = 0;
      for (const auto& d : ins) {
        const int64_t len = d->shape.c * plane;
        if (d->requires_grad) {
          T* g = d->ensure_grad();
          for (int64_t n = 0; n < N; ++n) {
            const T* src = o.grad.data() + n * c_total * plane + c_off * plane;
            T* dst = g + n * len;
            for (int64_t i = 0; i < len; ++i) dst[i] += src[i];
          }
        }
        c_off += d->shape.c;
      }
    });
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int64_t begin, int64_t count) {
  constexpr const char* op = "slice_channels";
  require_defined(op, x, "input");
  const Shape xs = x.shape();
  if (begin < 0 || count < 0 || begin + count > xs.c) {
    fail(op, "range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                 ") outside " + dim("c", xs.c));
  }
  const int64_t plane = xs.h * xs.w;
  auto out = make_output<T>(Shape{xs.n, count, xs.h, xs.w});
  for (int64_t n = 0; n < xs.n; ++n) {
    std::copy_n(x.data() + (n * xs.c + begin) * plane, count * plane,
                out->values.data() + n * count * plane);
  }
  if (should_record<T>({&x})) {
    auto xd = x.impl();
    Tape<T>::active()->record(op, {xd}, out, [xd, begin, count, plane](TensorData<T>& o) {
      if (!xd->requires_grad) return;
      T* g = xd->ensure_grad();
      const int64_t C = xd->shape.c;
      for (int64_t n = 0; n < xd->shape.n; ++n) {
        T* dst = g + (n * C + begin) * plane;
        const T* src = o.grad.data() + n * count * plane;
        for (int64_t i = 0; i < count * plane; ++i) dst[i] += src[i];
      }
    });
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  constexpr const char* op = "global_avg_pool";
  require_defined(op, x, "input");
  const Shape xs = x.shape();
  const int64_t plane = xs.h * xs.w;
  if (plane == 0) fail(op, "empty spatial extent " + xs.str());
  auto out = make_output<T>(Shape{xs.n, xs.c, 1, 1});
  for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
    double acc = 0.0;
    const T* p = x.data() + nc * plane;
    for (int64_t j = 0; j < plane; ++j) acc += p[j];
    out->values[nc] = static_cast<T>(acc / static_cast<double>(plane));
  }
  if (should_record<T>({&x})) {
    auto xd = x.impl();
    Tape<T>::active()->record(op, {xd}, out, [xd, plane](TensorData<T>& o) {
      if (!xd->requires_grad) return;
      T* g = xd->ensure_grad();
      const T inv = static_cast<T>(1.0 / static_cast<double>(plane));
      for (std::size_t nc = 0; nc < o.grad.size(); ++nc) {
        const T d = o.grad[nc] * inv;
        T* p = g + nc * plane;
        for (int64_t j = 0; j < plane; ++j) p[j] += d;
      }
    });
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> broadcast_spatial(const Tensor<T>& x, int64_t h, int64_t w) {
  constexpr const char* op = "broadcast_spatial";
  require_defined(op, x, "input");
  const Shape xs = x.shape();
  if (xs.h != 1 || xs.w != 1) fail(op, "input must be n x c x 1 x 1, got " + xs.str());
  if (h < 1 || w < 1) fail(op, "target extent " + dim("h", h) + " " + dim("w", w) + " must be positive");
  const int64_t plane = h * w;
  auto out = make_output<T>(Shape{xs.n, xs.c, h, w});
  for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
    std::fill_n(out->values.data() + nc * plane, plane, x.data()[nc]);
  }
  if (should_record<T>({&x})) {
    auto xd = x.impl();
    Tape<T>::active()->record(op, {xd}, out, [xd, plane](TensorData<T>& o) {
      if (!xd->requires_grad) return;
      T* g = xd->ensure_grad();
      for (std::size_t nc = 0; nc < xd->values.size(); ++nc) {
        double acc = 0.0;
        const T* d = o.grad.data() + nc * plane;
        for (int64_t j = 0; j < plane; ++j) acc += d[j];
        g[nc] += static_cast<T>(acc);
      }
    });
  }
  return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target) {
  constexpr const char* op = "bce_with_logits";
  require_defined(op, logits, "logits");
  require_defined(op, target, "target");
  if (logits.shape() != target.shape()) {
    fail(op, "shape mismatch " + logits.shape().str() + " vs target " + target.shape().str());
  }
  const int64_t N = logits.numel();
  if (N == 0) fail(op, "empty input");
  for (int64_t i = 0; i < N; ++i) {
    const T t = target.data()[i];
    if (t != T(0) && t != T(1)) {
      throw std::invalid_argument(std::string(op) + ": target value " + std::to_string(t) +
                                  " at index " + std::to_string(i) + " is not in {0,1}");
    }
  }
  double acc = 0.0;
  for (int64_t i = 0; i < N; ++i) {
    const double z = logits.data()[i];
    const double t = target.data()[i];
    acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  auto out = make_output<T>(Shape{1, 1, 1, 1});
  out->values[0] = static_cast<T>(acc / static_cast<double>(N));
  if (should_record<T>({&logits})) {
    auto zd = logits.impl();
    auto td = target.impl();
    Tape<T>::active()->record(op, {zd}, out, [zd, td, N](TensorData<T>& o) {
      if (!zd->requires_grad) return;
      T* g = zd->ensure_grad();
      const double scale = static_cast<double>(o.grad[0]) / static_cast<double>(N);
      for (int64_t i = 0; i < N; ++i) {
        const double z = zd->values[i];
        const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        g[i] += static_cast<T>((s - td->values[i]) * scale);
      }
    });
  }
  return Tensor<T>(out);
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& x) {
  const Shape s = x.shape();
  Tensor<T> out(s);
  for (int64_t r = 0; r < s.n * s.c * s.h; ++r) {
    const T* p = x.data() + r * s.w;
    T* q = out.data() + r * s.w;
    for (int64_t j = 0; j < s.w; ++j) q[j] = p[s.w - 1 - j];
  }
  return out;
}

template <typename T>
Tensor<T> flip_vertical(const Tensor<T>& x) {
  const Shape s = x.shape();
  Tensor<T> out(s);
  for (int64_t nc = 0; nc < s.n * s.c; ++nc) {
    for (int64_t i = 0; i < s.h; ++i) {
      std::copy_n(x.data() + (nc * s.h + i) * s.w, s.w, out.data() + (nc * s.h + (s.h - 1 - i)) * s.w);
    }
  }
  return out;
}

#define DSEG_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ConvParams);  \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, \
                                      int);                                                      \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                 NormStats<T>&, NormMode, double, double);                      \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                  \
  template Tensor<T> maxpool2d(const Tensor<T>&, int, int);                                      \
  template Tensor<T> bilinear_upsample2x(const Tensor<T>&);                                      \
  template Tensor<T> upsample_to(const Tensor<T>&, int64_t, int64_t);                            \
  template Tensor<T> concat_channels(std::span<const Tensor<T>>);                                \
  template Tensor<T> slice_channels(const Tensor<T>&, int64_t, int64_t);                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                          \
  template Tensor<T> broadcast_spatial(const Tensor<T>&, int64_t, int64_t);                      \
  template Tensor<T> bce_with_logits(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> flip_horizontal(const Tensor<T>&);                                          \
  template Tensor<T> flip_vertical(const Tensor<T>&);

DSEG_INSTANTIATE_OPS(float)
DSEG_INSTANTIATE_OPS(double)

#undef DSEG_INSTANTIATE_OPS

}  // namespace dseg
