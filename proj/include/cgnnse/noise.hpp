#pragma once

#include <string>
#include <vector>

#include "cgnnse/rng.hpp"

namespace cgnnse::datagen {

/// Measurement-noise model for PMU phasors. Magnitude errors are
/// multiplicative fractions, angle errors additive radians.
struct NoiseModel {
  enum class Kind { kGaussianTve, kGmmTve };

  Kind kind = Kind::kGaussianTve;

  // gaussian_tve
  double sigma_mag_frac = 0.0;
  double sigma_ang_rad = 0.0;

  // gmm_tve: shared component weights; per-component moments
  std::vector<double> weights;
  std::vector<double> mean_mag_frac, std_mag_frac;
  std::vector<double> mean_ang_rad, std_ang_rad;

  /// Equal magnitude/angle split calibrated so the 99.7th percentile of the
  /// total vector error equals `tve_frac`.
  static NoiseModel gaussian_tve(double tve_frac);
  static NoiseModel gaussian_sigmas(double sigma_mag_frac, double sigma_ang_rad);
  /// The published two-component benchmark mixture: magnitude means
  /// (-0.4%, 0.6%) / stds (0.25%, 0.25%), angle means (-0.2 deg, 0.3 deg) /
  /// stds (0.12 deg, 0.12 deg), weights (0.4, 0.6).
  static NoiseModel gmm_tve_default();
  static NoiseModel gmm_tve(std::vector<double> weights, std::vector<double> mean_mag_pct,
                            std::vector<double> std_mag_pct, std::vector<double> mean_ang_deg,
                            std::vector<double> std_ang_deg);

  /// Validates invariants (weights sum to 1, positive spreads). Throws
  /// InputError otherwise.
  void validate() const;

  /// Draws one measurement for a true phasor. `component_out`, when given,
  /// receives the mixture component index (-1 for the Gaussian model).
  void apply(double vm_true, double va_true, Rng& rng, double& vm_meas, double& va_meas,
             int* component_out = nullptr) const;

  std::string describe() const;
};

/// Total vector error of a measured phasor against truth.
double total_vector_error(double vm_true, double va_true, double vm_meas, double va_meas);

}  // namespace cgnnse::datagen
