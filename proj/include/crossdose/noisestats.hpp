#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crossdose/raster.hpp"

namespace crossdose::noisestats {

struct NoiseReport {
  double dose_fraction = 0;
  double q05 = 0;  // SUV
  double q95 = 0;
  double skewness = 0;
  double frac_negative = 0;
  double max_ld = 0;
  double max_fd = 0;
  std::size_t n_pixels = 0;
  bool zero_variance = false;  // skewness forced to 0
};

/// n = y - x elementwise.
ResidualImage residual(const ActivityImage& y, const LowDoseImage& x);
ResidualImage residual(const ActivityImage& y, const RasterF32& x);

/// Quantile with linear interpolation between order statistics:
/// position p * (n - 1) in the sorted sample.
double quantile_sorted(std::span<const double> sorted, double p);

/// Population skewness m3 / m2^(3/2); nullopt when the variance is zero.
std::optional<double> skewness(std::span<const double> v);

/// Statistics of n = y - x. With a mask only pixels where mask != 0 enter the
/// residual statistics; max_ld / max_fd are always taken over the whole image.
NoiseReport analyze_noise(const ActivityImage& y, const LowDoseImage& x,
                          std::span<const std::uint8_t> mask = {});

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::uint64_t> counts;
};

/// Equal-width histogram over [lo, hi]; values outside are clamped into the end bins.
Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi);

/// Histograms of the bottom and top 5% of residual values (n <= q05 and n >= q95).
struct TailHistograms {
  Histogram lower;
  Histogram upper;
};
TailHistograms tail_histograms(std::span<const double> residuals, std::size_t bins);

/// Residual values, optionally restricted to a mask.
std::vector<double> residual_values(const ActivityImage& y, const RasterF32& x,
                                    std::span<const std::uint8_t> mask = {});

void write_histogram_csv(const std::filesystem::path& path, const Histogram& h);

}  // namespace crossdose::noisestats
