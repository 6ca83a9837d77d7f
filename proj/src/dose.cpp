#include "crossdose/dose.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <string>

#include "crossdose/error.hpp"

namespace crossdose {

Dose Dose::from_fraction(double d) {
  if (!(d > 0.0) || d > 1.0) {
    throw ValidationError("dose fraction must lie in (0, 1], got " + std::to_string(d));
  }
  const double pct = d * 100.0;
  const long rounded = std::lround(pct);
  if (rounded < 1 || std::abs(pct - static_cast<double>(rounded)) > 1e-6) {
    throw ValidationError("dose fraction must be a whole percentage, got " + std::to_string(d));
  }
  return Dose(static_cast<int>(rounded));
}

Dose Dose::parse(const std::string& text) {
  std::string t = text;
  t.erase(std::remove_if(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); }), t.end());
  if (t.empty()) throw ValidationError("empty dose string");
  try {
    if (t.front() == 'd' && t.size() > 1) return Dose(std::stoi(t.substr(1)));
    if (t.back() == '%') return Dose::from_fraction(std::stod(t.substr(0, t.size() - 1)) / 100.0);
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw ValidationError("trailing characters in dose '" + text + "'");
    return v > 1.0 ? Dose::from_fraction(v / 100.0) : Dose::from_fraction(v);
  } catch (const std::logic_error&) {
    throw ValidationError("cannot parse dose '" + text + "'");
  }
}

std::string Dose::file_stem() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "d%03d", percent_);
  return buf;
}

std::string Dose::label() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", fraction());
  return buf;
}

bool is_standard_dose(Dose d) noexcept {
  return std::find(kStandardDoses.begin(), kStandardDoses.end(), d) != kStandardDoses.end();
}

}  // namespace crossdose
