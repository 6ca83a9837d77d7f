#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crossdose/dataset.hpp"
#include "crossdose/dose.hpp"
#include "crossdose/raster.hpp"

namespace crossdose::phantom {

/// Ellipse in pixel coordinates; pixel (r, c) has its center at (c + 0.5, r + 0.5).
struct Ellipse {
  double cx = 0, cy = 0;
  double ax = 1, ay = 1;   // semi-axes (pixels)
  double rotation = 0;     // radians
  double suv = 0;
};

struct Lesion {
  double cx = 0, cy = 0;
  double radius = 1;
  double peak_suv = 0;
};

struct PhantomSpec {
  std::uint32_t size = 128;
  double background_suv = 1.0;
  Ellipse body;                 // SUV of the body is background_suv; body.suv is ignored
  std::vector<Ellipse> organs;  // painted in order over the background
  std::vector<Lesion> lesions;  // painted last
  double smoothing_sigma = 1.0;
  double texture_amplitude = 0.0;  // relative amplitude of a smooth multiplicative field
  double suv_clip_max = 16.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Randomized torso-like slice: body ellipse, 2-4 organs, 1-4 hot lesions.
PhantomSpec random_phantom_spec(std::uint32_t size, std::uint64_t seed);

/// Uniform background with three large hot lesions; used by the residual-asymmetry study.
PhantomSpec hot_lesion_phantom_spec(std::uint32_t size, std::uint64_t seed);

/// Renders the clean full-dose reference: paint, texture, Gaussian smoothing, clip to [0, suv_clip_max].
ActivityImage synthesize_reference(const PhantomSpec& spec);

/// 1 inside any lesion disk, 0 elsewhere.
RasterF32 lesion_mask(const PhantomSpec& spec);

/// Separable Gaussian blur with zero padding; sigma 0 returns the input.
RasterF32 gaussian_smooth(const RasterF32& img, double sigma);

struct DoseSimConfig {
  Dose dose{100};
  double counts_per_suv = 50.0;  // expected full-dose counts per SUV per pixel
  std::uint64_t seed = 0;
};

/// x = Poisson(d * kappa * y) / (d * kappa), pixelwise.
LowDoseImage simulate_low_dose(const ActivityImage& y, const DoseSimConfig& cfg);

struct BuildConfig {
  double counts_per_suv = 50.0;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;  // the first n_train subjects form the training split
  std::vector<Dose> doses{kStandardDoses.begin(), kStandardDoses.end()};
  double suv_clip_max = 16.0;
};

/// "s000", "s001", ...
std::string subject_id(std::size_t index);

/// Seed of the Poisson stream for one (subject, dose) file.
std::uint64_t dose_stream_seed(std::uint64_t seed, const std::string& subject, Dose d);

/// Writes one directory per spec (full.ptr plus one file per dose) and the manifest.
DatasetManifest build_dataset(std::span<const PhantomSpec> specs, const BuildConfig& cfg,
                              const std::filesystem::path& root);

}  // namespace crossdose::phantom
