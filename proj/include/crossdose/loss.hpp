#pragma once

#include <cstddef>
#include <span>

#include "crossdose/metrics.hpp"
#include "crossdose/raster.hpp"

namespace crossdose::loss {

/// L = L_MAE + lambda * (1 - SSIM), with the metric's window and constants.
struct LossConfig {
  double lambda = 0.5;
  metrics::SsimParams ssim;

  void validate() const;
};

/// A batch of single-channel images laid out contiguously, image after image.
struct BatchShape {
  std::size_t batch = 1;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t image_size() const noexcept { return height * width; }
  std::size_t size() const noexcept { return batch * height * width; }
};

struct LossValue {
  double total = 0;
  double mae = 0;
  double ssim_loss = 0;
};

double mae_loss(std::span<const double> pred, std::span<const double> target, BatchShape shape);

/// 1 - SSIM per image, averaged over the batch.
double ssim_loss(std::span<const double> pred, std::span<const double> target, BatchShape shape,
                 const metrics::SsimParams& p);

/// Composite loss. When `grad` is non-empty it receives dL/dpred; the MAE
/// subgradient at pred == target is 0.
LossValue total_loss(std::span<const double> pred, std::span<const double> target, BatchShape shape,
                     const LossConfig& cfg, std::span<double> grad = {});

LossValue total_loss(const RasterF32& pred, const RasterF32& target, const LossConfig& cfg);

}  // namespace crossdose::loss
