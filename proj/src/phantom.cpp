#include "crossdose/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "crossdose/error.hpp"
#include "crossdose/parallel.hpp"
#include "crossdose/rng.hpp"

namespace crossdose::phantom {
namespace {

// Ellipse-normalized radius squared; <= 1 inside.
double ellipse_rho2(const Ellipse& e, double x, double y, double shrink = 0.0) {
  const double dx = x - e.cx, dy = y - e.cy;
  const double c = std::cos(e.rotation), s = std::sin(e.rotation);
  const double u = dx * c + dy * s;
  const double v = -dx * s + dy * c;
  const double ax = e.ax - shrink, ay = e.ay - shrink;
  if (ax <= 0 || ay <= 0) return 2.0;
  return (u * u) / (ax * ax) + (v * v) / (ay * ay);
}

void check_ellipse(const Ellipse& e, const char* what) {
  if (!(e.ax > 0) || !(e.ay > 0)) throw ValidationError(std::string(what) + ": zero-area ellipse");
  if (!(e.suv >= 0)) throw ValidationError(std::string(what) + ": SUV must be >= 0");
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Smooth zero-mean, unit-variance random field.
std::vector<double> smooth_field(std::uint32_t size, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "texture"));
  std::normal_distribution<double> normal(0.0, 1.0);
  RasterF32 white(size, size);
  for (float& v : white.data) v = static_cast<float>(normal(rng));
  const RasterF32 smooth = gaussian_smooth(white, 4.0);
  double mean = 0, var = 0;
  for (float v : smooth.data) mean += v;
  mean /= static_cast<double>(smooth.size());
  for (float v : smooth.data) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(smooth.size()));
  std::vector<double> out(smooth.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sd > 0 ? (smooth.data[i] - mean) / sd : 0.0;
  return out;
}

Ellipse random_body(std::uint32_t size, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double n = size;
  Ellipse body;
  body.cx = n / 2 + (u(rng) - 0.5) * 0.04 * n;
  body.cy = n / 2 + (u(rng) - 0.5) * 0.04 * n;
  body.ax = (0.36 + 0.10 * u(rng)) * n;
  body.ay = (0.28 + 0.12 * u(rng)) * n;
  body.rotation = (u(rng) - 0.5) * (std::numbers::pi / 9.0);
  return body;
}

// Rejection-samples a point whose disk of `margin` lies inside the body.
std::pair<double, double> point_inside(const Ellipse& body, double margin, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double x = body.cx + u(rng) * body.ax;
    const double y = body.cy + u(rng) * body.ay;
    if (ellipse_rho2(body, x, y, margin) <= 1.0) return {x, y};
  }
  return {body.cx, body.cy};
}

}  // namespace

void PhantomSpec::validate() const {
  if (size < 32) throw ValidationError("phantom size must be >= 32, got " + std::to_string(size));
  if (!(background_suv >= 0)) throw ValidationError("background SUV must be >= 0");
  Ellipse b = body;
  b.suv = background_suv;
  check_ellipse(b, "body");
  for (const auto& o : organs) check_ellipse(o, "organ");
  for (const auto& l : lesions) {
    if (!(l.radius > 0)) throw ValidationError("lesion: radius must be positive");
    if (!(l.peak_suv >= 0)) throw ValidationError("lesion: peak SUV must be >= 0");
    if (ellipse_rho2(body, l.cx, l.cy, l.radius) > 1.0) {
      throw ValidationError("lesion at (" + std::to_string(l.cx) + ", " + std::to_string(l.cy) +
                            ") does not lie inside the body ellipse");
    }
  }
  if (!(smoothing_sigma >= 0)) throw ValidationError("smoothing sigma must be >= 0");
  if (!(texture_amplitude >= 0) || texture_amplitude >= 1) {
    throw ValidationError("texture amplitude must lie in [0, 1)");
  }
  if (!(suv_clip_max > 0)) throw ValidationError("suv_clip_max must be positive");
}

PhantomSpec random_phantom_spec(std::uint32_t size, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "phantom-geometry"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PhantomSpec spec;
  spec.size = size;
  spec.seed = seed;
  spec.texture_amplitude = 0.15;
  spec.background_suv = 0.8 + 0.6 * u(rng);
  spec.body = random_body(size, rng);
  const double n = size;

  const int n_organs = 2 + static_cast<int>(u(rng) * 3.0);
  for (int i = 0; i < n_organs; ++i) {
    Ellipse o;
    o.ax = (0.06 + 0.10 * u(rng)) * n;
    o.ay = (0.05 + 0.08 * u(rng)) * n;
    o.rotation = u(rng) * std::numbers::pi;
    std::tie(o.cx, o.cy) = point_inside(spec.body, std::max(o.ax, o.ay), rng);
    o.suv = 1.5 + 3.5 * u(rng);
    spec.organs.push_back(o);
  }
  const int n_lesions = 1 + static_cast<int>(u(rng) * 4.0);
  for (int i = 0; i < n_lesions; ++i) {
    Lesion l;
    l.radius = 2.0 + 3.0 * u(rng);
    std::tie(l.cx, l.cy) = point_inside(spec.body, l.radius + 1.0, rng);
    l.peak_suv = 3.0 + 9.0 * u(rng);
    spec.lesions.push_back(l);
  }
  return spec;
}

PhantomSpec hot_lesion_phantom_spec(std::uint32_t size, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "hot-lesion-geometry"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PhantomSpec spec;
  spec.size = size;
  spec.seed = seed;
  spec.background_suv = 1.0;
  spec.body = random_body(size, rng);
  for (int i = 0; i < 3; ++i) {
    Lesion l;
    l.radius = 0.04 * size + 0.02 * size * u(rng);
    std::tie(l.cx, l.cy) = point_inside(spec.body, l.radius + 2.0, rng);
    l.peak_suv = 4.0 + 6.0 * u(rng);
    spec.lesions.push_back(l);
  }
  return spec;
}

RasterF32 gaussian_smooth(const RasterF32& img, double sigma) {
  if (sigma < 0) throw ValidationError("smoothing sigma must be >= 0");
  if (sigma == 0) return img;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
  std::vector<double> tmp(img.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int t = -r; t <= r; ++t) {
        const int xx = x + t;
        if (xx >= 0 && xx < w) acc += k[t + r] * img.data[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  RasterF32 out(img.height, img.width);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int t = -r; t <= r; ++t) {
        const int yy = y + t;
        if (yy >= 0 && yy < h) acc += k[t + r] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out.data[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
  }
  return out;
}

ActivityImage synthesize_reference(const PhantomSpec& spec) {
  spec.validate();
  const std::uint32_t n = spec.size;
  std::vector<double> img(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<char> inside(img.size(), 0);
  for (std::uint32_t r = 0; r < n; ++r) {
    for (std::uint32_t c = 0; c < n; ++c) {
      const double x = c + 0.5, y = r + 0.5;
      const std::size_t i = static_cast<std::size_t>(r) * n + c;
      if (ellipse_rho2(spec.body, x, y) > 1.0) continue;
      inside[i] = 1;
      double v = spec.background_suv;
      for (const auto& o : spec.organs) {
        if (ellipse_rho2(o, x, y) <= 1.0) v = o.suv;
      }
      img[i] = v;
    }
  }
  if (spec.texture_amplitude > 0) {
    const auto field = smooth_field(n, spec.seed);
    for (std::size_t i = 0; i < img.size(); ++i) {
      if (inside[i]) img[i] *= std::max(0.0, 1.0 + spec.texture_amplitude * field[i]);
    }
  }
  for (std::uint32_t r = 0; r < n; ++r) {
    for (std::uint32_t c = 0; c < n; ++c) {
      const double x = c + 0.5, y = r + 0.5;
      for (const auto& l : spec.lesions) {
        if ((x - l.cx) * (x - l.cx) + (y - l.cy) * (y - l.cy) <= l.radius * l.radius) {
          img[static_cast<std::size_t>(r) * n + c] = l.peak_suv;
        }
      }
    }
  }
  RasterF32 out(n, n);
  for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = static_cast<float>(img[i]);
  out = gaussian_smooth(out, spec.smoothing_sigma);
  const auto clip = static_cast<float>(spec.suv_clip_max);
  for (float& v : out.data) v = std::clamp(v, 0.0f, clip);
  return out;
}

RasterF32 lesion_mask(const PhantomSpec& spec) {
  RasterF32 mask(spec.size, spec.size);
  for (std::uint32_t r = 0; r < spec.size; ++r) {
    for (std::uint32_t c = 0; c < spec.size; ++c) {
      const double x = c + 0.5, y = r + 0.5;
      for (const auto& l : spec.lesions) {
        if ((x - l.cx) * (x - l.cx) + (y - l.cy) * (y - l.cy) <= l.radius * l.radius) mask.at(r, c) = 1.0f;
      }
    }
  }
  return mask;
}

LowDoseImage simulate_low_dose(const ActivityImage& y, const DoseSimConfig& cfg) {
  if (cfg.dose.percent() <= 0 || cfg.dose.percent() > 100) {
    throw ValidationError("dose fraction must lie in (0, 1]");
  }
  if (!(cfg.counts_per_suv > 0)) throw ValidationError("counts_per_suv must be positive");
  y.validate();
  const double scale = cfg.dose.fraction() * cfg.counts_per_suv;
  Rng rng(cfg.seed);
  LowDoseImage out{RasterF32(y.height, y.width), cfg.dose};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = y.data[i];
    if (v < 0) throw ValidationError("reference activity must be nonnegative");
    if (v == 0) continue;
    std::poisson_distribution<std::int64_t> poisson(scale * v);
    out.image.data[i] = static_cast<float>(static_cast<double>(poisson(rng)) / scale);
  }
  return out;
}

std::string subject_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%03zu", index);
  return buf;
}

std::uint64_t dose_stream_seed(std::uint64_t seed, const std::string& subject, Dose d) {
  return derive_seed(derive_seed(seed, subject), "dose", static_cast<std::uint64_t>(d.percent()));
}

DatasetManifest build_dataset(std::span<const PhantomSpec> specs, const BuildConfig& cfg,
                              const std::filesystem::path& root) {
  if (cfg.n_train > specs.size()) throw ValidationError("n_train exceeds the number of subjects");
  DatasetManifest m;
  m.seed = cfg.seed;
  m.suv_clip_max = cfg.suv_clip_max;
  m.dose_levels = cfg.doses;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    m.subject_ids.push_back(subject_id(i));
    m.splits.push_back(i < cfg.n_train ? Split::kTrain : Split::kTest);
  }
  m.validate();
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create '" + root.string() + "': " + ec.message());

  parallel_for(specs.size(), [&](std::size_t i) {
    const std::string& id = m.subject_ids[i];
    std::filesystem::create_directories(root / id);
    PhantomSpec spec = specs[i];
    spec.suv_clip_max = cfg.suv_clip_max;
    const ActivityImage y = synthesize_reference(spec);
    rasterio::write_raster(rasterio::reference_path(root, id), y);
    for (Dose d : cfg.doses) {
      const DoseSimConfig sim{d, cfg.counts_per_suv, dose_stream_seed(cfg.seed, id, d)};
      rasterio::write_raster(rasterio::dose_path(root, id, d), simulate_low_dose(y, sim).image);
    }
  });
  rasterio::write_manifest(root, m);
  return m;
}

}  // namespace crossdose::phantom
