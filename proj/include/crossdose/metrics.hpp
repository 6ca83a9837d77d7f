#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "crossdose/dose.hpp"
#include "crossdose/raster.hpp"

namespace crossdose::metrics {

enum class WindowKind { kUniform, kGaussian };

/// Local-window SSIM settings. The default is a uniform 11x11 window; the
/// Gaussian window (sigma 1.5) is available for cross-checking.
struct SsimParams {
  WindowKind window = WindowKind::kUniform;
  int window_size = 11;
  double gaussian_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 16.0;  // L

  void validate() const;
  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

struct MetricsRecord {
  std::string subject_id;
  Dose dose;
  std::string method;
  double psnr = 0;
  double ssim = 0;
  double rmse = 0;
};

double rmse(const RasterF32& a, const RasterF32& b);

/// 20 log10(L / rmse); +infinity when the images are identical.
double psnr(const RasterF32& ref, const RasterF32& est, double dynamic_range);
double psnr_from_rmse(double rmse, double dynamic_range);

/// Mean of the local SSIM index over every valid window position (no padding).
double ssim(const RasterF32& a, const RasterF32& b, const SsimParams& p = {});

/// Double-precision SSIM of one h x w image pair. When `grad_a` is non-empty it
/// receives d SSIM / d a. Throws ValidationError if the image is smaller than the window.
double ssim_value(std::span<const double> a, std::span<const double> b, std::size_t h, std::size_t w,
                  const SsimParams& p, std::span<double> grad_a = {});

/// "inf" for the identical-image sentinel, otherwise fixed precision.
std::string format_metric(double v);

}  // namespace crossdose::metrics
