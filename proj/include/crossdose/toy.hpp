#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace crossdose::toy {

enum class LossKind { kMse, kMae };

/// Scalar stand-in for cross-dose denoising: a clean value y is drawn uniformly
/// from `clean_values`, a dose j uniformly from `noise_scales`, and the
/// observation is x = y + noise_scales[j] * N(0, 1).
struct ToyProblem {
  std::vector<double> clean_values;
  std::vector<double> noise_scales;
  LossKind loss_kind = LossKind::kMse;
  std::size_t n_samples = 100000;
  std::size_t bins = 32;  // equal-mass bins of x
  std::uint64_t seed = 0;

  void validate() const;
};

struct ToySample {
  double x = 0;
  double y = 0;
  std::size_t dose = 0;
  std::size_t bin = 0;
};

/// Draws the sample set and assigns equal-mass x bins.
std::vector<ToySample> draw_samples(const ToyProblem& tp);

/// argmin_c sum loss(y_i - c), found by golden-section search over [min y, max y].
double minimize_loss(std::span<const double> ys, LossKind kind);

/// Optimum over the samples in `x_bin`, optionally restricted to one dose.
/// Throws ValidationError when the selection is empty.
double empirical_optimum(const ToyProblem& tp, std::size_t x_bin, std::optional<std::size_t> dose = std::nullopt);

struct GapCell {
  std::size_t bin = 0;
  std::size_t dose = 0;
  std::size_t n = 0;
  double mixed = 0;         // optimum over every dose in the bin
  double conditioned = 0;   // optimum over this dose only
  double standard_error = 0;
};

struct GapResult {
  double gap = 0;             // mean |mixed - conditioned| over cells
  double standard_error = 0;  // root-mean-square of the per-cell standard errors
  std::vector<GapCell> cells;
};

/// Mean absolute gap between the mixed-dose optimum and each dose-conditioned
/// optimum. Cells with fewer than `min_cell` samples are skipped.
GapResult averaging_gap(const ToyProblem& tp, std::size_t min_cell = 30);

void write_gap_csv(const std::filesystem::path& path, const GapResult& g);

}  // namespace crossdose::toy
