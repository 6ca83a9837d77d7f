#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "crossdose/dose.hpp"

namespace crossdose {

/// Row-major single-precision 2-D image in SUV (or SUV-residual) units.
struct RasterF32 {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> data;

  RasterF32() = default;
  RasterF32(std::uint32_t h, std::uint32_t w, float fill = 0.0f)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}
  RasterF32(std::uint32_t h, std::uint32_t w, std::vector<float> values);

  std::size_t size() const noexcept { return data.size(); }
  float& at(std::uint32_t row, std::uint32_t col) { return data[static_cast<std::size_t>(row) * width + col]; }
  float at(std::uint32_t row, std::uint32_t col) const {
    return data[static_cast<std::size_t>(row) * width + col];
  }
  bool same_shape(const RasterF32& other) const noexcept {
    return height == other.height && width == other.width;
  }

  /// Throws ValidationError on a size mismatch or non-finite values.
  void validate() const;

  friend bool operator==(const RasterF32&, const RasterF32&) = default;
};

using ActivityImage = RasterF32;
using ResidualImage = RasterF32;

/// A simulated low-count acquisition, tagged with the dose it was thinned to.
struct LowDoseImage {
  RasterF32 image;
  Dose dose;
};

/// Throws ValidationError naming `what` when the shapes differ.
void require_same_shape(const RasterF32& a, const RasterF32& b, const char* what);

namespace rasterio {

inline constexpr char kRasterMagic[4] = {'P', 'T', 'R', '1'};
inline constexpr char kTensorMagic[4] = {'P', 'T', 'N', '1'};
inline constexpr std::uint8_t kRasterVersion = 1;
inline constexpr std::size_t kRasterHeaderBytes = 13;

void write_raster(const std::filesystem::path& path, const RasterF32& img);
RasterF32 read_raster(const std::filesystem::path& path);

/// N-D float32 blob: "PTN1" | rank u8 | dims u32[rank] | payload (LE).
struct TensorF32 {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

void write_tensor(const std::filesystem::path& path, std::span<const std::uint32_t> shape,
                  std::span<const float> data);
TensorF32 read_tensor(const std::filesystem::path& path);

}  // namespace rasterio
}  // namespace crossdose
