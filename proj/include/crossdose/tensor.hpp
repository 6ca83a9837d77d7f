#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "crossdose/raster.hpp"

namespace crossdose::nn {

/// Dense NCHW float tensor.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const noexcept { return static_cast<std::size_t>(c) * h * w; }
  float* sample(int i) { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  const float* sample(int i) const { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  float* channel(int i, int ch) { return sample(i) + static_cast<std::size_t>(ch) * plane(); }
  const float* channel(int i, int ch) const { return sample(i) + static_cast<std::size_t>(ch) * plane(); }
  bool same_shape(const Tensor& o) const noexcept { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

/// Stacks same-shaped rasters into an N x 1 x H x W tensor.
Tensor stack(std::span<const RasterF32> images);
/// Extracts channel 0 of sample i.
RasterF32 unstack(const Tensor& t, int i);

}  // namespace crossdose::nn
