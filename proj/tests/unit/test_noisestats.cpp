#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "common.hpp"
#include "crossdose/error.hpp"
#include "crossdose/noisestats.hpp"
#include "crossdose/phantom.hpp"
#include "doctest.h"

using namespace crossdose;
using namespace crossdose::noisestats;

TEST_CASE("residual arithmetic") {
  RasterF32 y(1, 1, 2.0f), x(1, 1, 3.5f);
  CHECK(residual(y, x).data[0] == -1.5f);
  const auto r = testutil::random_raster(8, 8, 1);
  for (float v : residual(r, r).data) CHECK(v == 0.0f);
  CHECK_THROWS_AS(residual(RasterF32(2, 2), RasterF32(2, 3)), ValidationError);
}

TEST_CASE("residual reconstructs the reference on phantom data") {
  const auto y = phantom::synthesize_reference(phantom::random_phantom_spec(128, 3));
  for (Dose d : kStandardDoses) {
    const auto x = phantom::simulate_low_dose(y, {d, 50.0, 17});
    const auto n = residual(y, x);
    std::size_t exact = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const float back = n.data[i] + x.image.data[i];
      exact += back == y.data[i];
      // Rounding of y - x is bounded by half an ulp of the larger operand.
      const float scale = std::max(std::abs(y.data[i]), std::abs(x.image.data[i]));
      REQUIRE(std::abs(back - y.data[i]) <= scale * std::numeric_limits<float>::epsilon());
    }
    CHECK(static_cast<double>(exact) / static_cast<double>(y.size()) > 0.5);
  }
}

TEST_CASE("low-dose residuals have negative pixels") {
  const auto y = phantom::synthesize_reference(phantom::random_phantom_spec(128, 4));
  const auto x = phantom::simulate_low_dose(y, {Dose(1), 50.0, 5});
  const auto n = residual(y, x);
  CHECK(std::any_of(n.data.begin(), n.data.end(), [](float v) { return v < 0; }));
}

TEST_CASE("quantiles interpolate between order statistics") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(quantile_sorted(v, 0.0) == 1.0);
  CHECK(quantile_sorted(v, 1.0) == 4.0);
  CHECK(quantile_sorted(v, 0.05) == doctest::Approx(1.15));
  CHECK(quantile_sorted(v, 0.95) == doctest::Approx(3.85));
  CHECK(quantile_sorted(std::vector<double>{7}, 0.3) == 7.0);
  CHECK_THROWS_AS(quantile_sorted(std::vector<double>{}, 0.5), ValidationError);
}

TEST_CASE("skewness of small samples") {
  CHECK(*skewness(std::vector<double>{0, 0, 0, 1}) == doctest::Approx(2.0 / std::sqrt(3.0)));
  CHECK(*skewness(std::vector<double>{-1, 0, 1}) == doctest::Approx(0.0));
  CHECK_FALSE(skewness(std::vector<double>{2, 2, 2}).has_value());
}

TEST_CASE("identical images give a degenerate report") {
  const auto y = testutil::random_raster(16, 16, 2);
  const auto r = analyze_noise(y, LowDoseImage{y, Dose(5)});
  CHECK(r.q05 == 0.0);
  CHECK(r.q95 == 0.0);
  CHECK(r.skewness == 0.0);
  CHECK(r.zero_variance);
  CHECK(r.frac_negative == 0.0);
  CHECK(r.dose_fraction == doctest::Approx(0.05));
  CHECK(r.n_pixels == 256);
}

TEST_CASE("report fields and masking") {
  RasterF32 y(1, 4), x(1, 4);
  y.data = {1, 1, 1, 1};
  x.data = {0, 2, 1, 5};
  const auto r = analyze_noise(y, LowDoseImage{x, Dose(1)});
  CHECK(r.max_ld == 5.0);
  CHECK(r.max_fd == 1.0);
  CHECK(r.frac_negative == doctest::Approx(0.5));
  CHECK(r.q05 <= r.q95);
  const std::vector<std::uint8_t> mask{1, 1, 0, 0};
  const auto m = analyze_noise(y, LowDoseImage{x, Dose(1)}, mask);
  CHECK(m.n_pixels == 2);
  CHECK(m.max_ld == 5.0);  // maxima stay whole-image
  CHECK(m.frac_negative == doctest::Approx(0.5));
  CHECK_THROWS_AS(analyze_noise(y, LowDoseImage{x, Dose(1)}, std::vector<std::uint8_t>{0, 0, 0, 0}),
                  ValidationError);
  CHECK(analyze_noise(y, LowDoseImage{x, Dose(1)}).skewness == analyze_noise(y, LowDoseImage{x, Dose(1)}).skewness);
}

TEST_CASE("hot lesions: low-dose maxima overshoot and lesion residuals lean negative") {
  int overshoot = 0, negative_tail = 0, negative_skew = 0;
  const int trials = 20;
  for (int s = 0; s < trials; ++s) {
    const auto spec = phantom::hot_lesion_phantom_spec(128, static_cast<std::uint64_t>(s));
    const auto y = phantom::synthesize_reference(spec);
    const auto x = phantom::simulate_low_dose(y, {Dose(1), 50.0, static_cast<std::uint64_t>(100 + s)});
    const auto mask_r = phantom::lesion_mask(spec);
    std::vector<std::uint8_t> mask(mask_r.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mask_r.data[i] > 0;
    const auto r = analyze_noise(y, x, mask);
    overshoot += r.max_ld > r.max_fd;
    negative_tail += std::abs(r.q05) > r.q95;
    negative_skew += r.skewness < 0;
  }
  CHECK(overshoot >= 19);
  CHECK(negative_tail >= 18);
  CHECK(negative_skew >= 18);
}

TEST_CASE("skewness magnitude shrinks as dose rises") {
  int ok = 0;
  const int trials = 100;
  for (int s = 0; s < trials; ++s) {
    const auto y = phantom::synthesize_reference(phantom::random_phantom_spec(64, static_cast<std::uint64_t>(s)));
    const auto lo = analyze_noise(y, phantom::simulate_low_dose(y, {Dose(1), 50.0, static_cast<std::uint64_t>(s)}));
    const auto hi = analyze_noise(y, phantom::simulate_low_dose(y, {Dose(50), 50.0, static_cast<std::uint64_t>(s)}));
    ok += std::abs(lo.skewness) >= std::abs(hi.skewness);
  }
  CHECK(ok >= 90);
}

TEST_CASE("histograms") {
  const std::vector<double> v{0.0, 0.1, 0.5, 0.99, 1.0, -3.0, 7.0};
  const auto h = histogram(v, 4, 0.0, 1.0);
  REQUIRE(h.edges.size() == 5);
  CHECK(h.edges[2] == doctest::Approx(0.5));
  CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0}) == v.size());
  CHECK(h.counts[0] == 3);  // 0.0, 0.1 and the clamped -3
  CHECK(h.counts[3] == 3);  // 0.99, 1.0 and the clamped 7

  std::vector<double> ramp(1000);
  std::iota(ramp.begin(), ramp.end(), 0.0);
  const auto t = tail_histograms(ramp, 10);
  const auto lower = std::accumulate(t.lower.counts.begin(), t.lower.counts.end(), std::uint64_t{0});
  const auto upper = std::accumulate(t.upper.counts.begin(), t.upper.counts.end(), std::uint64_t{0});
  CHECK(lower == 50);  // 0..49 are <= q05 = 49.95
  CHECK(upper == 50);
  CHECK(t.lower.edges.back() == doctest::Approx(49.95));
}
