#include "cgnnse/kde.hpp"

#include <algorithm>
#include <cmath>

#include "cgnnse/errors.hpp"

namespace cgnnse::datagen {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t i = static_cast<std::size_t>(pos);
  if (i + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(i);
  return sorted[i] * (1.0 - frac) + sorted[i + 1] * frac;
}
}  // namespace

double LoadDistribution::sample(Rng& rng) const {
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double base = points[rng.index_below(points.size())];
    const double x = base + bandwidth * rng.normal();
    if (x >= lo && x <= hi) return x;
  }
  // Gaussian kernels stray past 3h with probability ~0.003 per draw; after
  // this many rejections just clamp.
  const double base = points[rng.index_below(points.size())];
  return std::clamp(base + bandwidth * rng.normal(), lo, hi);
}

double LoadDistribution::density(double x) const {
  double total = 0.0;
  for (double p : points) {
    const double z = (x - p) / bandwidth;
    total += std::exp(-0.5 * z * z);
  }
  return total * kInvSqrt2Pi / (bandwidth * static_cast<double>(points.size()));
}

LoadDistribution fit_load_kde(std::span<const double> history_mw, BandwidthRule rule,
                              double fixed_h) {
  if (history_mw.size() < 30) {
    throw InputError("fit_load_kde: need at least 30 historical points, got " +
                     std::to_string(history_mw.size()));
  }
  LoadDistribution d;
  d.points.assign(history_mw.begin(), history_mw.end());

  if (rule == BandwidthRule::kFixed) {
    if (fixed_h <= 0.0) throw InputError("fit_load_kde: fixed bandwidth must be positive");
    d.bandwidth = fixed_h;
  } else {
    const double n = static_cast<double>(d.points.size());
    double mean = 0.0;
    for (double p : d.points) mean += p;
    mean /= n;
    double var = 0.0;
    for (double p : d.points) var += (p - mean) * (p - mean);
    var /= n - 1.0;
    std::vector<double> sorted = d.points;
    std::sort(sorted.begin(), sorted.end());
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    double spread = std::sqrt(var);
    if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
    double h = 0.9 * spread * std::pow(n, -0.2);
    if (h <= 0.0) {
      // degenerate (constant) history: keep a small positive jitter
      h = 1e-3 * std::max(1.0, std::fabs(mean));
    }
    d.bandwidth = h;
  }

  const auto [mn, mx] = std::minmax_element(d.points.begin(), d.points.end());
  d.lo = *mn - 3.0 * d.bandwidth;
  d.hi = *mx + 3.0 * d.bandwidth;
  return d;
}

}  // namespace cgnnse::datagen
