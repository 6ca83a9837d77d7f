#include "crossdose/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

#include "crossdose/error.hpp"

namespace crossdose::nn {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

// (C, H, W) -> (C*k*k, H*W) with zero padding k/2.
void im2col(const float* x, int c, int h, int w, int k, float* col) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    const float* plane = x + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx), x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          float* dst = row + static_cast<std::size_t>(y) * w;
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) {
            std::memset(dst, 0, sizeof(float) * w);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(sy) * w;
          for (int xx = 0; xx < x_lo; ++xx) dst[xx] = 0.0f;
          std::memcpy(dst + x_lo, src + x_lo + dx, sizeof(float) * (x_hi - x_lo));
          for (int xx = x_hi; xx < w; ++xx) dst[xx] = 0.0f;
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into (C, H, W).
void col2im(const float* col, int c, int h, int w, int k, float* x) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    float* plane = x + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx), x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const float* src = row + static_cast<std::size_t>(y) * w;
          float* dst = plane + static_cast<std::size_t>(sy) * w;
          for (int xx = x_lo; xx < x_hi; ++xx) dst[xx + dx] += src[xx];
        }
      }
    }
  }
}

}  // namespace

Tensor Conv2d::forward(const std::vector<Parameter>& params, const Tensor& x) const {
  if (x.c != in_channels) {
    throw ValidationError("conv: expected " + std::to_string(in_channels) + " input channels, got " +
                          std::to_string(x.c));
  }
  Tensor y(x.n, out_channels, x.h, x.w);
  const int kk = in_channels * kernel * kernel;
  const auto hw = static_cast<Eigen::Index>(x.plane());
  ConstMatMap wmat(params[weight].value.data(), out_channels, kk);
  Eigen::Map<const Eigen::VectorXf> b(params[bias].value.data(), out_channels);
  std::vector<float> col(kernel == 1 ? 0 : static_cast<std::size_t>(kk) * hw);
  for (int i = 0; i < x.n; ++i) {
    const float* src = x.sample(i);
    if (kernel != 1) {
      im2col(src, x.c, x.h, x.w, kernel, col.data());
      src = col.data();
    }
    MatMap out(y.sample(i), out_channels, hw);
    out.noalias() = wmat * ConstMatMap(src, kk, hw);
    out.colwise() += b;
  }
  return y;
}

Tensor Conv2d::backward(std::vector<Parameter>& params, const Tensor& x, const Tensor& grad_out,
                        bool need_input_grad) const {
  const int kk = in_channels * kernel * kernel;
  const auto hw = static_cast<Eigen::Index>(x.plane());
  ConstMatMap wmat(params[weight].value.data(), out_channels, kk);
  MatMap dw(params[weight].grad.data(), out_channels, kk);
  Eigen::Map<Eigen::VectorXf> db(params[bias].grad.data(), out_channels);
  Tensor dx;
  if (need_input_grad) dx = Tensor(x.n, x.c, x.h, x.w);
  std::vector<float> col(kernel == 1 ? 0 : static_cast<std::size_t>(kk) * hw);
  RowMatrix dcol;
  for (int i = 0; i < x.n; ++i) {
    const float* src = x.sample(i);
    if (kernel != 1) {
      im2col(src, x.c, x.h, x.w, kernel, col.data());
      src = col.data();
    }
    ConstMatMap dy(grad_out.sample(i), out_channels, hw);
    dw.noalias() += dy * ConstMatMap(src, kk, hw).transpose();
    // Fixed summation order: Eigen's vectorized reductions peel by pointer
    // alignment, which would make the bias gradient depend on heap addresses.
    for (int o = 0; o < out_channels; ++o) {
      const float* row = grad_out.sample(i) + static_cast<std::size_t>(o) * hw;
      double acc = 0;
      for (Eigen::Index j = 0; j < hw; ++j) acc += row[j];
      db[o] += static_cast<float>(acc);
    }
    if (need_input_grad) {
      if (kernel == 1) {
        MatMap(dx.sample(i), kk, hw).noalias() = wmat.transpose() * dy;
      } else {
        dcol.noalias() = wmat.transpose() * dy;
        col2im(dcol.data(), x.c, x.h, x.w, kernel, dx.sample(i));
      }
    }
  }
  return dx;
}

Tensor BatchNorm2d::forward_train(std::vector<Parameter>& params, std::vector<Parameter>& buffers,
                                  const Tensor& x, Cache& cache) const {
  Tensor y(x.n, x.c, x.h, x.w);
  cache.xhat = Tensor(x.n, x.c, x.h, x.w);
  cache.inv_std.assign(channels, 0.0f);
  const std::size_t hw = x.plane();
  const double m = static_cast<double>(x.n) * hw;
  for (int ch = 0; ch < channels; ++ch) {
    double sum = 0;
    for (int i = 0; i < x.n; ++i) {
      const float* p = x.channel(i, ch);
      for (std::size_t j = 0; j < hw; ++j) sum += p[j];
    }
    const double mean = sum / m;
    double sq = 0;
    for (int i = 0; i < x.n; ++i) {
      const float* p = x.channel(i, ch);
      for (std::size_t j = 0; j < hw; ++j) sq += (p[j] - mean) * (p[j] - mean);
    }
    const double var = sq / m;
    const auto inv_std = static_cast<float>(1.0 / std::sqrt(var + kEps));
    cache.inv_std[ch] = inv_std;
    const float g = params[gamma].value[ch], b = params[beta].value[ch];
    const auto meanf = static_cast<float>(mean);
    for (int i = 0; i < x.n; ++i) {
      const float* p = x.channel(i, ch);
      float* xh = cache.xhat.channel(i, ch);
      float* out = y.channel(i, ch);
      for (std::size_t j = 0; j < hw; ++j) {
        xh[j] = (p[j] - meanf) * inv_std;
        out[j] = g * xh[j] + b;
      }
    }
    const double unbiased = m > 1 ? sq / (m - 1) : var;
    float& rm = buffers[running_mean].value[ch];
    float& rv = buffers[running_var].value[ch];
    rm = (1.0f - kMomentum) * rm + kMomentum * static_cast<float>(mean);
    rv = (1.0f - kMomentum) * rv + kMomentum * static_cast<float>(unbiased);
  }
  return y;
}

Tensor BatchNorm2d::forward_eval(const std::vector<Parameter>& params, const std::vector<Parameter>& buffers,
                                 const Tensor& x) const {
  Tensor y(x.n, x.c, x.h, x.w);
  const std::size_t hw = x.plane();
  for (int ch = 0; ch < channels; ++ch) {
    const float inv_std = 1.0f / std::sqrt(buffers[running_var].value[ch] + kEps);
    const float scale = params[gamma].value[ch] * inv_std;
    const float shift = params[beta].value[ch] - buffers[running_mean].value[ch] * scale;
    for (int i = 0; i < x.n; ++i) {
      const float* p = x.channel(i, ch);
      float* out = y.channel(i, ch);
      for (std::size_t j = 0; j < hw; ++j) out[j] = p[j] * scale + shift;
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(std::vector<Parameter>& params, const Cache& cache, const Tensor& grad_out) const {
  const Tensor& xh = cache.xhat;
  Tensor dx(xh.n, xh.c, xh.h, xh.w);
  const std::size_t hw = xh.plane();
  const double m = static_cast<double>(xh.n) * hw;
  for (int ch = 0; ch < channels; ++ch) {
    double sum_dy = 0, sum_dy_xh = 0;
    for (int i = 0; i < xh.n; ++i) {
      const float* dy = grad_out.channel(i, ch);
      const float* x = xh.channel(i, ch);
      for (std::size_t j = 0; j < hw; ++j) {
        sum_dy += dy[j];
        sum_dy_xh += static_cast<double>(dy[j]) * x[j];
      }
    }
    params[gamma].grad[ch] += static_cast<float>(sum_dy_xh);
    params[beta].grad[ch] += static_cast<float>(sum_dy);
    const float scale = params[gamma].value[ch] * cache.inv_std[ch] / static_cast<float>(m);
    const auto mean_dy = static_cast<float>(sum_dy);
    const auto mean_dy_xh = static_cast<float>(sum_dy_xh);
    const auto mf = static_cast<float>(m);
    for (int i = 0; i < xh.n; ++i) {
      const float* dy = grad_out.channel(i, ch);
      const float* x = xh.channel(i, ch);
      float* out = dx.channel(i, ch);
      for (std::size_t j = 0; j < hw; ++j) out[j] = scale * (mf * dy[j] - mean_dy - x[j] * mean_dy_xh);
    }
  }
  return dx;
}

void leaky_relu_inplace(Tensor& t, float slope) {
  for (float& v : t.data) v = v >= 0.0f ? v : slope * v;
}

void leaky_relu_backward_inplace(Tensor& grad, const Tensor& activation, float slope) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (activation.data[i] < 0.0f) grad.data[i] *= slope;
  }
}

Tensor max_pool2(const Tensor& x, std::vector<std::uint32_t>* argmax) {
  if (x.h % 2 != 0 || x.w % 2 != 0) throw ValidationError("max_pool2: spatial size must be even");
  Tensor y(x.n, x.c, x.h / 2, x.w / 2);
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      const float* p = x.channel(i, ch);
      for (int r = 0; r < y.h; ++r) {
        for (int c = 0; c < y.w; ++c, ++o) {
          std::uint32_t best = static_cast<std::uint32_t>(2 * r * x.w + 2 * c);
          for (std::uint32_t cand : {best + 1, best + static_cast<std::uint32_t>(x.w),
                                     best + static_cast<std::uint32_t>(x.w) + 1}) {
            if (p[cand] > p[best]) best = cand;
          }
          y.data[o] = p[best];
          if (argmax) (*argmax)[o] = best;
        }
      }
    }
  }
  return y;
}

Tensor max_pool2_backward(const Tensor& grad_out, const std::vector<std::uint32_t>& argmax, int h, int w) {
  Tensor dx(grad_out.n, grad_out.c, h, w);
  std::size_t o = 0;
  for (int i = 0; i < grad_out.n; ++i) {
    for (int ch = 0; ch < grad_out.c; ++ch) {
      float* p = dx.channel(i, ch);
      for (std::size_t j = 0; j < grad_out.plane(); ++j, ++o) p[argmax[o]] += grad_out.data[o];
    }
  }
  return dx;
}

Tensor upsample_nearest2(const Tensor& x) {
  Tensor y(x.n, x.c, x.h * 2, x.w * 2);
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      const float* p = x.channel(i, ch);
      float* q = y.channel(i, ch);
      for (int r = 0; r < y.h; ++r) {
        const float* src = p + static_cast<std::size_t>(r / 2) * x.w;
        float* dst = q + static_cast<std::size_t>(r) * y.w;
        for (int c = 0; c < y.w; ++c) dst[c] = src[c / 2];
      }
    }
  }
  return y;
}

Tensor upsample_nearest2_backward(const Tensor& grad_out) {
  Tensor dx(grad_out.n, grad_out.c, grad_out.h / 2, grad_out.w / 2);
  for (int i = 0; i < grad_out.n; ++i) {
    for (int ch = 0; ch < grad_out.c; ++ch) {
      const float* g = grad_out.channel(i, ch);
      float* d = dx.channel(i, ch);
      for (int r = 0; r < grad_out.h; ++r) {
        const float* src = g + static_cast<std::size_t>(r) * grad_out.w;
        float* dst = d + static_cast<std::size_t>(r / 2) * dx.w;
        for (int c = 0; c < grad_out.w; ++c) dst[c / 2] += src[c];
      }
    }
  }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) throw ValidationError("concat: incompatible tensors");
  Tensor y(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.sample(i), a.sample(i) + a.sample_size(), y.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.sample_size(), y.sample(i) + a.sample_size());
  }
  return y;
}

void split_channels(const Tensor& g, int first_channels, Tensor& ga, Tensor& gb) {
  ga = Tensor(g.n, first_channels, g.h, g.w);
  gb = Tensor(g.n, g.c - first_channels, g.h, g.w);
  for (int i = 0; i < g.n; ++i) {
    std::copy(g.sample(i), g.sample(i) + ga.sample_size(), ga.sample(i));
    std::copy(g.sample(i) + ga.sample_size(), g.sample(i) + g.sample_size(), gb.sample(i));
  }
}

Tensor stack(std::span<const RasterF32> images) {
  if (images.empty()) throw ValidationError("stack: no images");
  const auto& first = images.front();
  Tensor t(static_cast<int>(images.size()), 1, static_cast<int>(first.height), static_cast<int>(first.width));
  for (std::size_t i = 0; i < images.size(); ++i) {
    require_same_shape(first, images[i], "stack");
    std::copy(images[i].data.begin(), images[i].data.end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

RasterF32 unstack(const Tensor& t, int i) {
  RasterF32 r(static_cast<std::uint32_t>(t.h), static_cast<std::uint32_t>(t.w));
  std::copy(t.channel(i, 0), t.channel(i, 0) + t.plane(), r.data.begin());
  return r;
}

}  // namespace crossdose::nn
