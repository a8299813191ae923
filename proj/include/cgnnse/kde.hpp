#pragma once

#include <span>
#include <vector>

#include "cgnnse/rng.hpp"

namespace cgnnse::datagen {

enum class BandwidthRule { kSilverman, kFixed };

/// Gaussian-kernel density estimate over a historical load series (MW).
/// Sampling draws a historical point plus kernel noise and is confined to
/// [min - 3h, max + 3h] of the historical support.
struct LoadDistribution {
  std::vector<double> points;
  double bandwidth = 0.0;
  double lo = 0.0;  // min(points) - 3h
  double hi = 0.0;  // max(points) + 3h

  double sample(Rng& rng) const;
  /// Kernel density at x (integrates to 1 over the real line before the
  /// support clamp; used by tests).
  double density(double x) const;
};

/// Fits the KDE. Requires at least 30 points; `fixed_h` is used when rule is
/// kFixed and must be positive.
LoadDistribution fit_load_kde(std::span<const double> history_mw, BandwidthRule rule,
                              double fixed_h = 0.0);

}  // namespace cgnnse::datagen
