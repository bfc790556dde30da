// SPDX-License-Identifier: Apache-2.0
#include "ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace mdunet::ops {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// cols[(c*9 + ky*3 + kx), y*W + x] = x(c, y+ky-1, x+kx-1), zero outside.
std::vector<float> im2col3(const Tensor& x) {
  const int h = x.height, w = x.width;
  const std::size_t p = x.plane();
  std::vector<float> cols(static_cast<std::size_t>(x.channels) * 9 * p, 0.0f);
  for (int c = 0; c < x.channels; ++c) {
    const float* src = x.data.data() + c * p;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        float* dst = cols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * p;
        const int dy = ky - 1, dx = kx - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          const float* s = src + (y + dy) * w + dx;
          float* d = dst + y * w;
          for (int xx = x0; xx < x1; ++xx) d[xx] = s[xx];
        }
      }
    }
  }
  return cols;
}

void col2im3(const std::vector<float>& cols, Tensor& dx) {
  const int h = dx.height, w = dx.width;
  const std::size_t p = dx.plane();
  for (int c = 0; c < dx.channels; ++c) {
    float* dst = dx.data.data() + c * p;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const float* src = cols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * p;
        const int dy = ky - 1, ddx = kx - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        const int x0 = std::max(0, -ddx), x1 = std::min(w, w - ddx);
        for (int y = y0; y < y1; ++y) {
          float* d = dst + (y + dy) * w + ddx;
          const float* s = src + y * w;
          for (int xx = x0; xx < x1; ++xx) d[xx] += s[xx];
        }
      }
    }
  }
}

}  // namespace

Tensor conv_forward(const ParamStore& ps, const layers::Conv2d& conv, const Tensor& x) {
  const auto p = static_cast<Eigen::Index>(x.plane());
  const int taps = conv.kernel * conv.kernel;
  const auto& w = ps[conv.weight].value;
  const auto& b = ps[conv.bias].value;
  Tensor y(conv.out, x.height, x.width);
  ConstMapMat wm(w.data(), conv.out, static_cast<Eigen::Index>(conv.in) * taps);
  MapMat ym(y.data.data(), conv.out, p);
  if (conv.kernel == 1) {
    ym.noalias() = wm * ConstMapMat(x.data.data(), conv.in, p);
  } else {
    const auto cols = im2col3(x);
    ym.noalias() = wm * ConstMapMat(cols.data(), static_cast<Eigen::Index>(conv.in) * 9, p);
  }
  for (int o = 0; o < conv.out; ++o) ym.row(o).array() += b[static_cast<std::size_t>(o)];
  return y;
}

Tensor conv_backward(ParamStore& ps, const layers::Conv2d& conv, const Tensor& x,
                     const Tensor& dy) {
  const auto p = static_cast<Eigen::Index>(x.plane());
  const Eigen::Index k = static_cast<Eigen::Index>(conv.in) * conv.kernel * conv.kernel;
  auto& wp = ps[conv.weight];
  auto& bp = ps[conv.bias];
  ConstMapMat dym(dy.data.data(), conv.out, p);
  ConstMapMat wm(wp.value.data(), conv.out, k);
  MapMat dwm(wp.grad.data(), conv.out, k);
  for (int o = 0; o < conv.out; ++o) bp.grad[static_cast<std::size_t>(o)] += dym.row(o).sum();

  Tensor dx(conv.in, x.height, x.width);
  if (conv.kernel == 1) {
    ConstMapMat xm(x.data.data(), conv.in, p);
    dwm.noalias() += dym * xm.transpose();
    MapMat(dx.data.data(), conv.in, p).noalias() = wm.transpose() * dym;
  } else {
    const auto cols = im2col3(x);
    dwm.noalias() += dym * ConstMapMat(cols.data(), k, p).transpose();
    std::vector<float> dcols(static_cast<std::size_t>(k * p));
    MapMat(dcols.data(), k, p).noalias() = wm.transpose() * dym;
    col2im3(dcols, dx);
  }
  return dx;
}

Tensor instance_norm_forward(const ParamStore& ps, const layers::InstanceNorm& norm,
                             const Tensor& x, NormCache* cache) {
  const auto& scale = ps[norm.scale].value;
  const auto& shift = ps[norm.shift].value;
  const std::size_t p = x.plane();
  Tensor y(x.channels, x.height, x.width);
  Tensor xhat(x.channels, x.height, x.width);
  std::vector<double> inv_std(static_cast<std::size_t>(x.channels));
  for (int c = 0; c < x.channels; ++c) {
    const auto in = x.channel(c);
    double mean = 0.0;
    for (float v : in) mean += v;
    mean /= static_cast<double>(p);
    double var = 0.0;
    for (float v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(p);
    const double is = 1.0 / std::sqrt(var + norm.eps);
    inv_std[static_cast<std::size_t>(c)] = is;
    auto xh = xhat.channel(c);
    auto out = y.channel(c);
    const float g = scale[static_cast<std::size_t>(c)];
    const float b = shift[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < p; ++i) {
      xh[i] = static_cast<float>((in[i] - mean) * is);
      out[i] = g * xh[i] + b;
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor instance_norm_backward(ParamStore& ps, const layers::InstanceNorm& norm,
                              const NormCache& cache, const Tensor& dy) {
  auto& scale = ps[norm.scale];
  auto& shift = ps[norm.shift];
  const std::size_t p = dy.plane();
  const double n = static_cast<double>(p);
  Tensor dx(dy.channels, dy.height, dy.width);
  for (int c = 0; c < dy.channels; ++c) {
    const auto g = dy.channel(c);
    const auto xh = cache.normalized.channel(c);
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      sum_g += g[i];
      sum_gx += static_cast<double>(g[i]) * xh[i];
    }
    const auto cs = static_cast<std::size_t>(c);
    scale.grad[cs] += static_cast<float>(sum_gx);
    shift.grad[cs] += static_cast<float>(sum_g);
    const double gamma = scale.value[cs];
    const double k = gamma * cache.inv_std[cs] / n;
    auto out = dx.channel(c);
    for (std::size_t i = 0; i < p; ++i) {
      out[i] = static_cast<float>(k * (n * g[i] - sum_g - xh[i] * sum_gx));
    }
  }
  return dx;
}

void relu_inplace(Tensor& x) {
  for (auto& v : x.data) v = v > 0.0f ? v : 0.0f;
}

void relu_backward_inplace(const Tensor& out, Tensor& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    if (!(out.data[i] > 0.0f)) dy.data[i] = 0.0f;
  }
}

Tensor maxpool2_forward(const Tensor& x, std::vector<int>* argmax) {
  const int oh = x.height / 2, ow = x.width / 2;
  Tensor y(x.channels, oh, ow);
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (int c = 0; c < x.channels; ++c) {
    for (int yy = 0; yy < oh; ++yy) {
      for (int xx = 0; xx < ow; ++xx, ++o) {
        float best = -std::numeric_limits<float>::infinity();
        int best_idx = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int sy = 2 * yy + dy, sx = 2 * xx + dx;
            const float v = x(c, sy, sx);
            if (v > best) {
              best = v;
              best_idx = sy * x.width + sx;
            }
          }
        }
        y.data[o] = best;
        if (argmax) (*argmax)[o] = best_idx;
      }
    }
  }
  return y;
}

Tensor maxpool2_backward(const std::vector<int>& argmax, int channels, Shape2 in_shape,
                         const Tensor& dy) {
  Tensor dx(channels, in_shape.height, in_shape.width);
  const std::size_t op = dy.plane();
  for (int c = 0; c < channels; ++c) {
    auto plane = dx.channel(c);
    for (std::size_t i = 0; i < op; ++i) {
      const std::size_t o = static_cast<std::size_t>(c) * op + i;
      plane[static_cast<std::size_t>(argmax[o])] += dy.data[o];
    }
  }
  return dx;
}

namespace {

struct Tap {
  int lo;
  int hi;
  float w_hi;
};

// Source taps for output index i when upsampling length n by 2.
Tap upsample_tap(int i, int n) {
  float src = (static_cast<float>(i) + 0.5f) * 0.5f - 0.5f;
  if (src < 0.0f) src = 0.0f;
  const int lo = std::min(static_cast<int>(src), n - 1);
  const int hi = std::min(lo + 1, n - 1);
  return {lo, hi, src - static_cast<float>(lo)};
}

}  // namespace

Tensor upsample2_forward(const Tensor& x) {
  const int oh = x.height * 2, ow = x.width * 2;
  Tensor y(x.channels, oh, ow);
  std::vector<Tap> ty(static_cast<std::size_t>(oh)), tx(static_cast<std::size_t>(ow));
  for (int i = 0; i < oh; ++i) ty[static_cast<std::size_t>(i)] = upsample_tap(i, x.height);
  for (int i = 0; i < ow; ++i) tx[static_cast<std::size_t>(i)] = upsample_tap(i, x.width);
  for (int c = 0; c < x.channels; ++c) {
    for (int yy = 0; yy < oh; ++yy) {
      const Tap& a = ty[static_cast<std::size_t>(yy)];
      for (int xx = 0; xx < ow; ++xx) {
        const Tap& b = tx[static_cast<std::size_t>(xx)];
        const float top = x(c, a.lo, b.lo) * (1.0f - b.w_hi) + x(c, a.lo, b.hi) * b.w_hi;
        const float bot = x(c, a.hi, b.lo) * (1.0f - b.w_hi) + x(c, a.hi, b.hi) * b.w_hi;
        y(c, yy, xx) = top * (1.0f - a.w_hi) + bot * a.w_hi;
      }
    }
  }
  return y;
}

Tensor upsample2_backward(const Tensor& dy, Shape2 in_shape) {
  Tensor dx(dy.channels, in_shape.height, in_shape.width);
  for (int c = 0; c < dy.channels; ++c) {
    for (int yy = 0; yy < dy.height; ++yy) {
      const Tap a = upsample_tap(yy, in_shape.height);
      for (int xx = 0; xx < dy.width; ++xx) {
        const Tap b = upsample_tap(xx, in_shape.width);
        const float g = dy(c, yy, xx);
        const float gt = g * (1.0f - a.w_hi), gb = g * a.w_hi;
        dx(c, a.lo, b.lo) += gt * (1.0f - b.w_hi);
        dx(c, a.lo, b.hi) += gt * b.w_hi;
        dx(c, a.hi, b.lo) += gb * (1.0f - b.w_hi);
        dx(c, a.hi, b.hi) += gb * b.w_hi;
      }
    }
  }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor y(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), y.data.begin());
  std::copy(b.data.begin(), b.data.end(),
            y.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return y;
}

void split_channels(const Tensor& d, int first_channels, Tensor& da, Tensor& db) {
  da = Tensor(first_channels, d.height, d.width);
  db = Tensor(d.channels - first_channels, d.height, d.width);
  const auto mid = d.data.begin() + static_cast<std::ptrdiff_t>(da.data.size());
  std::copy(d.data.begin(), mid, da.data.begin());
  std::copy(mid, d.data.end(), db.data.begin());
}

void add_inplace(Tensor& acc, const Tensor& x) {
  for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += x.data[i];
}

Tensor softmax(const Tensor& logits) {
  Tensor p(logits.channels, logits.height, logits.width);
  const std::size_t n = logits.plane();
  const int k = logits.channels;
  for (std::size_t i = 0; i < n; ++i) {
    float mx = logits.data[i];
    for (int c = 1; c < k; ++c) mx = std::max(mx, logits.data[c * n + i]);
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      const double e = std::exp(static_cast<double>(logits.data[c * n + i] - mx));
      p.data[c * n + i] = static_cast<float>(e);
      sum += e;
    }
    for (int c = 0; c < k; ++c) {
      p.data[c * n + i] = static_cast<float>(p.data[c * n + i] / sum);
    }
  }
  return p;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& grad_probs) {
  Tensor d(probs.channels, probs.height, probs.width);
  const std::size_t n = probs.plane();
  const int k = probs.channels;
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int c = 0; c < k; ++c) {
      dot += static_cast<double>(probs.data[c * n + i]) * grad_probs.data[c * n + i];
    }
    for (int c = 0; c < k; ++c) {
      d.data[c * n + i] = static_cast<float>(probs.data[c * n + i] *
                                             (grad_probs.data[c * n + i] - dot));
    }
  }
  return d;
}

}  // namespace mdunet::ops
