#include "crossdose/toy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "crossdose/error.hpp"
#include "crossdose/rng.hpp"

namespace crossdose::toy {
namespace {

// sum_i loss(y_i - a) - loss(y_i - b), accumulated termwise so that the
// comparison stays exact near the minimum where the totals are nearly equal.
double loss_difference(std::span<const double> ys, double a, double b, LossKind kind) {
  double s = 0;
  if (kind == LossKind::kMse) {
    for (double y : ys) s += (b - a) * (2.0 * y - a - b);
  } else {
    for (double y : ys) s += std::abs(y - a) - std::abs(y - b);
  }
  return s;
}

double sample_var(std::span<const double> v) {
  if (v.size() < 2) return 0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

void ToyProblem::validate() const {
  if (clean_values.empty()) throw ValidationError("toy problem needs at least one clean value");
  if (noise_scales.size() < 2) throw ValidationError("toy problem needs at least two noise scales");
  for (double s : noise_scales) {
    if (!(s > 0)) throw ValidationError("noise scales must be positive");
  }
  if (n_samples < 10000) throw ValidationError("toy problem needs n_samples >= 10000");
  if (bins < 1 || bins > n_samples) throw ValidationError("invalid bin count");
}

std::vector<ToySample> draw_samples(const ToyProblem& tp) {
  tp.validate();
  Rng rng(derive_seed(tp.seed, "toy"));
  std::uniform_int_distribution<std::size_t> pick_y(0, tp.clean_values.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_d(0, tp.noise_scales.size() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ToySample> s(tp.n_samples);
  for (auto& v : s) {
    v.y = tp.clean_values[pick_y(rng)];
    v.dose = pick_d(rng);
    v.x = v.y + tp.noise_scales[v.dose] * normal(rng);
  }
  // Equal-mass bins: rank by x (ties by index), then split the ranks evenly.
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a].x < s[b].x; });
  for (std::size_t r = 0; r < order.size(); ++r) s[order[r]].bin = r * tp.bins / order.size();
  return s;
}

double minimize_loss(std::span<const double> ys, LossKind kind) {
  if (ys.empty()) throw ValidationError("empty bin");
  auto [lo_it, hi_it] = std::minmax_element(ys.begin(), ys.end());
  double lo = *lo_it, hi = *hi_it;
  if (lo == hi) return lo;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  const double tol = 1e-14 * std::max({1.0, std::abs(lo), std::abs(hi)});
  for (int it = 0; it < 400 && hi - lo > tol; ++it) {
    if (loss_difference(ys, c, d, kind) <= 0) {  // f(c) <= f(d): minimum in [lo, d]
      hi = d;
      d = c;
      c = hi - inv_phi * (hi - lo);
    } else {
      lo = c;
      c = d;
      d = lo + inv_phi * (hi - lo);
    }
  }
  return 0.5 * (lo + hi);
}

double empirical_optimum(const ToyProblem& tp, std::size_t x_bin, std::optional<std::size_t> dose) {
  if (x_bin >= tp.bins) throw ValidationError("bin index out of range");
  const auto samples = draw_samples(tp);
  std::vector<double> ys;
  for (const auto& s : samples) {
    if (s.bin == x_bin && (!dose || s.dose == *dose)) ys.push_back(s.y);
  }
  if (ys.empty()) throw ValidationError("empty bin");
  return minimize_loss(ys, tp.loss_kind);
}

GapResult averaging_gap(const ToyProblem& tp, std::size_t min_cell) {
  const auto samples = draw_samples(tp);
  const std::size_t nd = tp.noise_scales.size();
  std::vector<std::vector<std::vector<double>>> by_cell(tp.bins, std::vector<std::vector<double>>(nd));
  for (const auto& s : samples) by_cell[s.bin][s.dose].push_back(s.y);

  // Sampling-noise factor of the estimator relative to the mean.
  const double eff = tp.loss_kind == LossKind::kMse ? 1.0 : std::sqrt(M_PI / 2.0);
  GapResult g;
  double se2 = 0;
  for (std::size_t b = 0; b < tp.bins; ++b) {
    std::vector<double> all;
    for (const auto& v : by_cell[b]) all.insert(all.end(), v.begin(), v.end());
    if (all.empty()) continue;
    const double mixed = minimize_loss(all, tp.loss_kind);
    for (std::size_t j = 0; j < nd; ++j) {
      const auto& mine = by_cell[b][j];
      if (mine.size() < min_cell || mine.size() == all.size()) continue;
      std::vector<double> rest;
      for (std::size_t k = 0; k < nd; ++k) {
        if (k != j) rest.insert(rest.end(), by_cell[b][k].begin(), by_cell[b][k].end());
      }
      // mixed - conditioned = (n_rest / n) (m_rest - m_j) for means.
      const double n = static_cast<double>(all.size()), nj = static_cast<double>(mine.size());
      const double nr = static_cast<double>(rest.size());
      const double se = eff * (nr / n) * std::sqrt(sample_var(mine) / nj + sample_var(rest) / nr);
      GapCell c{b, j, mine.size(), mixed, minimize_loss(mine, tp.loss_kind), se};
      g.cells.push_back(c);
      g.gap += std::abs(c.mixed - c.conditioned);
      se2 += se * se;
    }
  }
  if (g.cells.empty()) throw ValidationError("no (bin, dose) cell has enough samples");
  g.gap /= static_cast<double>(g.cells.size());
  g.standard_error = std::sqrt(se2 / static_cast<double>(g.cells.size()));
  return g;
}

void write_gap_csv(const std::filesystem::path& path, const GapResult& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "bin,dose,n,mixed,conditioned,abs_gap,standard_error\n";
  char line[200];
  for (const auto& c : g.cells) {
    std::snprintf(line, sizeof line, "%zu,%zu,%zu,%.10g,%.10g,%.10g,%.10g\n", c.bin, c.dose, c.n, c.mixed,
                  c.conditioned, std::abs(c.mixed - c.conditioned), c.standard_error);
    out << line;
  }
  std::snprintf(line, sizeof line, "mean,,,,,%.10g,%.10g\n", g.gap, g.standard_error);
  out << line;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace crossdose::toy
