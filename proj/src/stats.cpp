#include "crossdose/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "crossdose/error.hpp"

namespace crossdose::stats {

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, std::size_t exact_limit) {
  if (a.size() != b.size()) throw ValidationError("paired test needs equally many observations");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    if (!std::isfinite(diff)) throw ValidationError("paired test: non-finite difference");
    if (diff != 0.0) d.push_back(diff);
  }
  WilcoxonResult r;
  r.n_used = d.size();
  if (d.empty()) return r;

  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });

  // Twice the average rank keeps tied ranks integral.
  std::vector<long> rank2(n);
  double tie_term = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const long r2 = static_cast<long>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long w2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0) w2 += rank2[i];
  }
  r.w_plus = static_cast<double>(w2) / 2.0;

  if (n <= exact_limit) {
    // Counts of every attainable doubled rank sum under random signs.
    std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (long s = reach; s >= 0; --s) {
        if (count[static_cast<std::size_t>(s)] != 0.0) count[static_cast<std::size_t>(s + rank2[i])] += count[static_cast<std::size_t>(s)];
      }
      reach += rank2[i];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double lower = 0, upper = 0;
    for (long s = 0; s <= total2; ++s) {
      if (s <= w2) lower += count[static_cast<std::size_t>(s)];
      if (s >= w2) upper += count[static_cast<std::size_t>(s)];
    }
    r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    r.exact = true;
    return r;
  }

  const double nn = static_cast<double>(n);
  const double mu = nn * (nn + 1) / 4.0;
  const double var = nn * (nn + 1) * (2 * nn + 1) / 24.0 - tie_term / 48.0;
  if (!(var > 0)) return r;
  const double z = std::max(0.0, std::abs(r.w_plus - mu) - 0.5) / std::sqrt(var);
  r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  r.exact = false;
  return r;
}

std::string significance_marker(double p) {
  if (p < 0.005) return "†";
  if (p < 0.05) return "*";
  return "";
}

double mean(std::span<const double> v) {
  if (v.empty()) throw ValidationError("mean of an empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) throw ValidationError("sample standard deviation needs at least two values");
  const double m = mean(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace crossdose::stats
