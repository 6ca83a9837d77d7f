#pragma once

#include <array>
#include <compare>
#include <string>

namespace crossdose {

/// A count level, stored as an integer percentage of the full-dose counts.
///
/// Integer percentages keep dose comparisons exact; `fraction()` gives the
/// real-valued d used by the simulator and the dose encoding.
class Dose {
public:
  constexpr Dose() = default;
  constexpr explicit Dose(int percent) : percent_(percent) {}

  /// Parses "0.05", "5%", "5" (percent when > 1) or "d005". Throws ValidationError.
  static Dose parse(const std::string& text);
  /// Nearest integer percentage of a fraction in (0, 1].
  static Dose from_fraction(double d);

  constexpr int percent() const noexcept { return percent_; }
  constexpr double fraction() const noexcept { return percent_ / 100.0; }

  /// "d001" .. "d050": dataset file stem.
  std::string file_stem() const;
  /// "0.01" style rendering used in manifests and CSVs.
  std::string label() const;

  constexpr auto operator<=>(const Dose&) const = default;

private:
  int percent_ = 100;
};

inline constexpr std::array<Dose, 6> kStandardDoses = {Dose(1), Dose(2), Dose(5),
                                                       Dose(10), Dose(25), Dose(50)};

bool is_standard_dose(Dose d) noexcept;

}  // namespace crossdose
