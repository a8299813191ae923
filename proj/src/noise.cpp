#include "cgnnse/noise.hpp"

#include <cmath>
#include <complex>

#include "cgnnse/errors.hpp"

namespace cgnnse::datagen {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
// 99.7th percentile of a Rayleigh with unit scale: sqrt(-2 ln 0.003).
const double kRayleigh997 = std::sqrt(-2.0 * std::log(0.003));
}  // namespace

NoiseModel NoiseModel::gaussian_tve(double tve_frac) {
  if (tve_frac < 0.0) throw InputError("gaussian_tve: budget must be >= 0");
  NoiseModel m;
  m.kind = Kind::kGaussianTve;
  m.sigma_mag_frac = tve_frac / kRayleigh997;
  m.sigma_ang_rad = tve_frac / kRayleigh997;
  return m;
}

NoiseModel NoiseModel::gaussian_sigmas(double sigma_mag_frac, double sigma_ang_rad) {
  if (sigma_mag_frac < 0.0 || sigma_ang_rad < 0.0) {
    throw InputError("gaussian_sigmas: spreads must be >= 0");
  }
  NoiseModel m;
  m.kind = Kind::kGaussianTve;
  m.sigma_mag_frac = sigma_mag_frac;
  m.sigma_ang_rad = sigma_ang_rad;
  return m;
}

NoiseModel NoiseModel::gmm_tve(std::vector<double> weights, std::vector<double> mean_mag_pct,
                               std::vector<double> std_mag_pct,
                               std::vector<double> mean_ang_deg,
                               std::vector<double> std_ang_deg) {
  NoiseModel m;
  m.kind = Kind::kGmmTve;
  m.weights = std::move(weights);
  const std::size_t c = m.weights.size();
  if (mean_mag_pct.size() != c || std_mag_pct.size() != c || mean_ang_deg.size() != c ||
      std_ang_deg.size() != c) {
    throw InputError("gmm_tve: component arrays must share one length");
  }
  m.mean_mag_frac.resize(c);
  m.std_mag_frac.resize(c);
  m.mean_ang_rad.resize(c);
  m.std_ang_rad.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    m.mean_mag_frac[i] = mean_mag_pct[i] / 100.0;
    m.std_mag_frac[i] = std_mag_pct[i] / 100.0;
    m.mean_ang_rad[i] = mean_ang_deg[i] * kDegToRad;
    m.std_ang_rad[i] = std_ang_deg[i] * kDegToRad;
  }
  m.validate();
  return m;
}

NoiseModel NoiseModel::gmm_tve_default() {
  return gmm_tve({0.4, 0.6}, {-0.4, 0.6}, {0.25, 0.25}, {-0.2, 0.3}, {0.12, 0.12});
}

void NoiseModel::validate() const {
  if (kind == Kind::kGaussianTve) {
    if (sigma_mag_frac < 0.0 || sigma_ang_rad < 0.0) {
      throw InputError("noise model: negative spread");
    }
    return;
  }
  if (weights.empty()) throw InputError("gmm noise model: no components");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw InputError("gmm noise model: negative weight");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw InputError("gmm noise model: weights sum to " + std::to_string(total));
  }
  for (double s : std_mag_frac) {
    if (s <= 0.0) throw InputError("gmm noise model: magnitude std must be positive");
  }
  for (double s : std_ang_rad) {
    if (s <= 0.0) throw InputError("gmm noise model: angle std must be positive");
  }
}

void NoiseModel::apply(double vm_true, double va_true, Rng& rng, double& vm_meas,
                       double& va_meas, int* component_out) const {
  if (kind == Kind::kGaussianTve) {
    vm_meas = vm_true * (1.0 + sigma_mag_frac * rng.normal());
    va_meas = va_true + sigma_ang_rad * rng.normal();
    if (component_out) *component_out = -1;
    return;
  }
  const std::size_t c = rng.categorical(weights);
  vm_meas = vm_true * (1.0 + rng.normal(mean_mag_frac[c], std_mag_frac[c]));
  va_meas = va_true + rng.normal(mean_ang_rad[c], std_ang_rad[c]);
  if (component_out) *component_out = static_cast<int>(c);
}

std::string NoiseModel::describe() const {
  if (kind == Kind::kGaussianTve) {
    return "gaussian_tve(sigma_mag=" + std::to_string(sigma_mag_frac) +
           ", sigma_ang_rad=" + std::to_string(sigma_ang_rad) + ")";
  }
  return "gmm_tve(" + std::to_string(weights.size()) + " components)";
}

double total_vector_error(double vm_true, double va_true, double vm_meas, double va_meas) {
  const std::complex<double> truth = std::polar(vm_true, va_true);
  const std::complex<double> meas = std::polar(vm_meas, va_meas);
  return std::abs(meas - truth) / std::abs(truth);
}

}  // namespace cgnnse::datagen
