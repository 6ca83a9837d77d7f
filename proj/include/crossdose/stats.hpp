#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace crossdose::stats {

struct WilcoxonResult {
  double p_value = 1.0;     // two-sided
  double w_plus = 0;        // rank sum of positive differences
  std::size_t n_used = 0;   // pairs with a nonzero difference
  bool exact = true;        // null distribution enumerated rather than approximated
};

/// Two-sided Wilcoxon signed-rank test on the paired differences a - b.
/// Zero differences are dropped; tied |differences| get average ranks. The
/// null distribution is enumerated exactly for up to `exact_limit` pairs and
/// approximated by a tie-corrected normal with continuity correction beyond.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    std::size_t exact_limit = 50);

/// "†" for p < 0.005, "*" for p < 0.05, "" otherwise.
std::string significance_marker(double p);

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1 denominator). Requires n >= 2.
double sample_std(std::span<const double> v);

}  // namespace crossdose::stats
