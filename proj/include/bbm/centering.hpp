#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bbm {

inline constexpr double sqrt2 = std::numbers::sqrt2;

/// 3 / (2 sqrt 2), the logarithmic correction coefficient of the centering.
inline constexpr double log_correction = 3.0 / (2.0 * std::numbers::sqrt2);

/// log(max(t, 1)); zero on [0, 1].
inline double log_plus(double t) noexcept { return std::log(std::max(t, 1.0)); }

/// Centering m(t) = sqrt2 t - 3/(2 sqrt2) log+ t.  Throws on t < 0.
double centering(double t);

/// Drift gamma(t, s) = 3/(2 sqrt2) (log+ s - (s/t) log+ t) for 0 <= s <= t.
/// Equals (s/t) m(t) - m(s).  Throws when s lies outside [0, t].
double gamma_drift(double t, double s);

}  // namespace bbm
