#include "crossdose/noisestats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "crossdose/error.hpp"

namespace crossdose::noisestats {

ResidualImage residual(const ActivityImage& y, const RasterF32& x) {
  require_same_shape(y, x, "residual");
  ResidualImage n(y.height, y.width);
  for (std::size_t i = 0; i < n.data.size(); ++i) n.data[i] = y.data[i] - x.data[i];
  return n;
}

ResidualImage residual(const ActivityImage& y, const LowDoseImage& x) { return residual(y, x.image); }

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of an empty sample");
  if (!(p >= 0 && p <= 1)) throw ValidationError("quantile level must lie in [0, 1]");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return sorted[lo] + t * (sorted[hi] - sorted[lo]);
}

std::optional<double> skewness(std::span<const double> v) {
  if (v.empty()) return std::nullopt;
  double mean = 0;
  for (double a : v) mean += a;
  mean /= static_cast<double>(v.size());
  double m2 = 0, m3 = 0;
  for (double a : v) {
    const double d = a - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= static_cast<double>(v.size());
  m3 /= static_cast<double>(v.size());
  if (!(m2 > 0)) return std::nullopt;
  return m3 / std::pow(m2, 1.5);
}

std::vector<double> residual_values(const ActivityImage& y, const RasterF32& x, std::span<const std::uint8_t> mask) {
  require_same_shape(y, x, "residual");
  if (!mask.empty() && mask.size() != y.data.size()) throw ValidationError("mask size does not match the image");
  std::vector<double> out;
  out.reserve(y.data.size());
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    if (mask.empty() || mask[i]) out.push_back(static_cast<double>(y.data[i] - x.data[i]));
  }
  return out;
}

NoiseReport analyze_noise(const ActivityImage& y, const LowDoseImage& x, std::span<const std::uint8_t> mask) {
  std::vector<double> n = residual_values(y, x.image, mask);
  if (n.empty()) throw ValidationError("analyze_noise: mask selects no pixels");
  NoiseReport r;
  r.dose_fraction = x.dose.fraction();
  r.n_pixels = n.size();
  r.frac_negative =
      static_cast<double>(std::count_if(n.begin(), n.end(), [](double v) { return v < 0; })) / static_cast<double>(n.size());
  const auto sk = skewness(n);
  r.zero_variance = !sk.has_value();
  r.skewness = sk.value_or(0.0);
  std::sort(n.begin(), n.end());
  r.q05 = quantile_sorted(n, 0.05);
  r.q95 = quantile_sorted(n, 0.95);
  r.max_ld = *std::max_element(x.image.data.begin(), x.image.data.end());
  r.max_fd = *std::max_element(y.data.begin(), y.data.end());
  return r;
}

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0) throw ValidationError("histogram needs at least one bin");
  if (!(hi > lo)) hi = lo + 1.0;
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

TailHistograms tail_histograms(std::span<const double> residuals, std::size_t bins) {
  if (residuals.empty()) throw ValidationError("tail histograms of an empty sample");
  std::vector<double> sorted(residuals.begin(), residuals.end());
  std::sort(sorted.begin(), sorted.end());
  const double q05 = quantile_sorted(sorted, 0.05), q95 = quantile_sorted(sorted, 0.95);
  std::vector<double> lower, upper;
  for (double v : sorted) {
    if (v <= q05) lower.push_back(v);
    if (v >= q95) upper.push_back(v);
  }
  return {histogram(lower, bins, sorted.front(), q05), histogram(upper, bins, q95, sorted.back())};
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& h) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "bin_lo,bin_hi,count\n";
  char line[128];
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    std::snprintf(line, sizeof line, "%.9g,%.9g,%llu\n", h.edges[i], h.edges[i + 1],
                  static_cast<unsigned long long>(h.counts[i]));
    out << line;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace crossdose::noisestats
