#include "crossdose/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "crossdose/error.hpp"

namespace crossdose::metrics {
namespace {

std::vector<double> window_weights(const SsimParams& p) {
  std::vector<double> w(static_cast<std::size_t>(p.window_size));
  const int r = p.window_size / 2;
  double sum = 0;
  for (int i = 0; i < p.window_size; ++i) {
    const double t = i - r;
    w[i] = p.window == WindowKind::kUniform ? 1.0
                                            : std::exp(-0.5 * t * t / (p.gaussian_sigma * p.gaussian_sigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Valid-region separable correlation: (h, w) -> (h-K+1, w-K+1).
std::vector<double> filter_valid(std::span<const double> img, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t K = k.size(), ho = h - K + 1, wo = w - K + 1;
  std::vector<double> tmp(h * wo);
  for (std::size_t r = 0; r < h; ++r) {
    const double* row = img.data() + r * w;
    for (std::size_t c = 0; c < wo; ++c) {
      double acc = 0;
      for (std::size_t t = 0; t < K; ++t) acc += k[t] * row[c + t];
      tmp[r * wo + c] = acc;
    }
  }
  std::vector<double> out(ho * wo, 0.0);
  for (std::size_t r = 0; r < ho; ++r) {
    for (std::size_t t = 0; t < K; ++t) {
      const double kt = k[t];
      const double* src = tmp.data() + (r + t) * wo;
      double* dst = out.data() + r * wo;
      for (std::size_t c = 0; c < wo; ++c) dst[c] += kt * src[c];
    }
  }
  return out;
}

// Adjoint of filter_valid: (h-K+1, w-K+1) -> (h, w).
std::vector<double> filter_valid_adjoint(const std::vector<double>& m, std::size_t h, std::size_t w,
                                         const std::vector<double>& k) {
  const std::size_t K = k.size(), ho = h - K + 1, wo = w - K + 1;
  std::vector<double> tmp(h * wo, 0.0);
  for (std::size_t r = 0; r < ho; ++r) {
    for (std::size_t t = 0; t < K; ++t) {
      const double kt = k[t];
      const double* src = m.data() + r * wo;
      double* dst = tmp.data() + (r + t) * wo;
      for (std::size_t c = 0; c < wo; ++c) dst[c] += kt * src[c];
    }
  }
  std::vector<double> out(h * w, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    double* row = out.data() + r * w;
    for (std::size_t c = 0; c < wo; ++c) {
      const double v = tmp[r * wo + c];
      for (std::size_t t = 0; t < K; ++t) row[c + t] += k[t] * v;
    }
  }
  return out;
}

std::vector<double> to_double(const RasterF32& img) { return {img.data.begin(), img.data.end()}; }

}  // namespace

void SsimParams::validate() const {
  if (window_size < 1 || window_size % 2 == 0) throw ValidationError("SSIM window must be odd-sized");
  if (!(k1 > 0) || !(k2 > 0)) throw ValidationError("SSIM constants k1, k2 must be positive");
  if (!(dynamic_range > 0)) throw ValidationError("SSIM dynamic range L must be positive");
  if (window == WindowKind::kGaussian && !(gaussian_sigma > 0)) {
    throw ValidationError("Gaussian SSIM window needs sigma > 0");
  }
}

double rmse(const RasterF32& a, const RasterF32& b) {
  require_same_shape(a, b, "rmse");
  if (a.size() == 0) throw ValidationError("rmse: empty images");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

double psnr_from_rmse(double err, double dynamic_range) {
  if (!(dynamic_range > 0)) throw ValidationError("psnr: dynamic range must be positive");
  if (err == 0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(dynamic_range / err);
}

double psnr(const RasterF32& ref, const RasterF32& est, double dynamic_range) {
  return psnr_from_rmse(rmse(ref, est), dynamic_range);
}

double ssim_value(std::span<const double> a, std::span<const double> b, std::size_t h, std::size_t w,
                  const SsimParams& p, std::span<double> grad_a) {
  p.validate();
  const auto K = static_cast<std::size_t>(p.window_size);
  if (h < K || w < K) {
    throw ValidationError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than the " +
                          std::to_string(K) + "x" + std::to_string(K) + " window");
  }
  if (a.size() != h * w || b.size() != h * w) throw ValidationError("ssim: shape mismatch");
  const auto k = window_weights(p);
  const double c1 = p.c1(), c2 = p.c2();

  std::vector<double> aa(h * w), bb(h * w), ab(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w, k);
  const auto mu_b = filter_valid(b, h, w, k);
  const auto e_aa = filter_valid(aa, h, w, k);
  const auto e_bb = filter_valid(bb, h, w, k);
  const auto e_ab = filter_valid(ab, h, w, k);

  const std::size_t n = mu_a.size();
  const bool want_grad = !grad_a.empty();
  if (want_grad && grad_a.size() != h * w) throw ValidationError("ssim: gradient buffer has the wrong size");
  std::vector<double> alpha, beta, gamma;
  if (want_grad) {
    alpha.resize(n);
    beta.resize(n);
    gamma.resize(n);
  }
  double total = 0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    const double a1 = 2 * ma * mb + c1, a2 = 2 * cov + c2;
    const double b1 = ma * ma + mb * mb + c1, b2 = va + vb + c2;
    const double s = (a1 * a2) / (b1 * b2);
    total += s;
    if (want_grad) {
      const double d_mu = (2 * mb * a2) / (b1 * b2) - s * (2 * ma) / b1;
      const double d_var = -s / b2;
      const double d_cov = 2 * a1 / (b1 * b2);
      alpha[i] = inv_n * (d_mu - 2 * ma * d_var - mb * d_cov);
      beta[i] = inv_n * 2 * d_var;
      gamma[i] = inv_n * d_cov;
    }
  }
  if (want_grad) {
    const auto ga = filter_valid_adjoint(alpha, h, w, k);
    const auto gb = filter_valid_adjoint(beta, h, w, k);
    const auto gc = filter_valid_adjoint(gamma, h, w, k);
    for (std::size_t i = 0; i < h * w; ++i) grad_a[i] = ga[i] + a[i] * gb[i] + b[i] * gc[i];
  }
  return total * inv_n;
}

double ssim(const RasterF32& a, const RasterF32& b, const SsimParams& p) {
  require_same_shape(a, b, "ssim");
  const auto da = to_double(a), db = to_double(b);
  return ssim_value(da, db, a.height, a.width, p);
}

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace crossdose::metrics
