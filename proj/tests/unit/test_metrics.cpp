#include <cmath>
#include <limits>

#include "common.hpp"
#include "crossdose/error.hpp"
#include "crossdose/metrics.hpp"
#include "doctest.h"

using namespace crossdose;
using namespace crossdose::metrics;

namespace {

// Direct two-pass windowed SSIM, uniform or Gaussian, valid positions only.
double naive_ssim(const RasterF32& a, const RasterF32& b, const SsimParams& p) {
  const int K = p.window_size, r = K / 2;
  std::vector<double> w1(static_cast<std::size_t>(K));
  double s = 0;
  for (int i = 0; i < K; ++i) {
    const double t = i - r;
    w1[i] = p.window == WindowKind::kUniform ? 1.0 : std::exp(-t * t / (2 * p.gaussian_sigma * p.gaussian_sigma));
    s += w1[i];
  }
  for (double& v : w1) v /= s;
  const double c1 = std::pow(p.k1 * p.dynamic_range, 2), c2 = std::pow(p.k2 * p.dynamic_range, 2);
  double total = 0;
  int count = 0;
  for (int r0 = 0; r0 + K <= static_cast<int>(a.height); ++r0) {
    for (int q0 = 0; q0 + K <= static_cast<int>(a.width); ++q0) {
      double ma = 0, mb = 0;
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
          const double wt = w1[i] * w1[j];
          ma += wt * a.at(r0 + i, q0 + j);
          mb += wt * b.at(r0 + i, q0 + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
          const double wt = w1[i] * w1[j];
          const double da = a.at(r0 + i, q0 + j) - ma, db = b.at(r0 + i, q0 + j) - mb;
          va += wt * da * da;
          vb += wt * db * db;
          cov += wt * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}

}  // namespace

TEST_CASE("rmse examples") {
  RasterF32 a(2, 2, 0.0f), b(2, 2, 1.0f);
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(a, b) == 1.0);
  RasterF32 c(2, 2);
  c.data = {0, 0, 0, 2};
  CHECK(rmse(a, c) == doctest::Approx(1.0));
  CHECK_THROWS_AS(rmse(a, RasterF32(2, 3)), ValidationError);
}

TEST_CASE("psnr examples") {
  RasterF32 a(4, 4, 0.0f), b(4, 4, 1.0f), c(4, 4, 16.0f);
  CHECK(psnr(a, b, 16.0) == doctest::Approx(20.0 * std::log10(16.0)));
  CHECK(psnr(a, b, 16.0) == doctest::Approx(24.082).epsilon(1e-4));
  CHECK(psnr(a, c, 16.0) == doctest::Approx(0.0));
  CHECK(std::isinf(psnr(a, a, 16.0)));
  CHECK(format_metric(psnr(a, a, 16.0)) == "inf");
  CHECK(format_metric(1.5) == "1.500000");
  CHECK_THROWS_AS(psnr_from_rmse(1.0, 0.0), ValidationError);
}

TEST_CASE("ssim of constant images") {
  const RasterF32 one(16, 16, 1.0f), two(16, 16, 2.0f);
  // zero variances: (2*1*2 + c1) / (1 + 4 + c1), c1 = 0.16^2
  CHECK(ssim(one, two) == doctest::Approx(4.0256 / 5.0256).epsilon(1e-12));
  CHECK(std::abs(ssim(one, two) - 0.80102) < 1e-4);
  CHECK(ssim(one, one) == 1.0);
}

TEST_CASE("ssim matches a direct windowed computation") {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto a = testutil::random_raster(19, 23, s, 0.0f, 8.0f);
    const auto b = testutil::random_raster(19, 23, s + 100, 0.0f, 8.0f);
    SsimParams p;
    CHECK(ssim(a, b, p) == doctest::Approx(naive_ssim(a, b, p)).epsilon(1e-9));
    p.window = WindowKind::kGaussian;
    CHECK(ssim(a, b, p) == doctest::Approx(naive_ssim(a, b, p)).epsilon(1e-9));
    p.window_size = 7;
    p.dynamic_range = 4.0;
    CHECK(ssim(a, b, p) == doctest::Approx(naive_ssim(a, b, p)).epsilon(1e-9));
  }
}

TEST_CASE("ssim identity, symmetry and bounds") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = testutil::random_raster(24, 24, s, -2.0f, 16.0f);
    auto b = testutil::random_raster(24, 24, s + 1000, -2.0f, 16.0f);
    CHECK(std::abs(ssim(a, a) - 1.0) < 1e-6);
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-6);
    CHECK(std::abs(ssim(a, b)) <= 1.0);
    for (auto& v : b.data) v = -v;  // anti-correlated
    CHECK(std::abs(ssim(a, b)) <= 1.0);
  }
}

TEST_CASE("ssim errors") {
  CHECK_THROWS_AS(ssim(RasterF32(10, 20), RasterF32(10, 20)), ValidationError);
  CHECK_THROWS_AS(ssim(RasterF32(12, 12), RasterF32(12, 13)), ValidationError);
  SsimParams even;
  even.window_size = 10;
  CHECK_THROWS_AS(ssim(RasterF32(12, 12), RasterF32(12, 12), even), ValidationError);
  SsimParams zero_l;
  zero_l.dynamic_range = 0;
  CHECK_THROWS_AS(ssim(RasterF32(12, 12), RasterF32(12, 12), zero_l), ValidationError);
}

TEST_CASE("ssim gradient against finite differences") {
  const auto a = testutil::random_raster(14, 13, 5, 0.0f, 4.0f);
  const auto b = testutil::random_raster(14, 13, 6, 0.0f, 4.0f);
  std::vector<double> da(a.data.begin(), a.data.end()), db(b.data.begin(), b.data.end()), g(da.size());
  SsimParams p;
  ssim_value(da, db, 14, 13, p, g);
  const double eps = 1e-5;
  for (std::size_t i = 0; i < da.size(); i += 7) {
    auto up = da, dn = da;
    up[i] += eps;
    dn[i] -= eps;
    const double fd = (ssim_value(up, db, 14, 13, p) - ssim_value(dn, db, 14, 13, p)) / (2 * eps);
    CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
  }
}
