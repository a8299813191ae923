#pragma once

#include <cstdint>
#include <vector>

#include "cgnnse/matrix.hpp"

namespace cgnnse::datagen {

/// Diagonal-covariance Gaussian mixture over one bus's feature channels.
struct GmmPrior {
  std::vector<double> weights;  // C, on the simplex
  numerics::Matrix means;       // C x f
  numerics::Matrix vars;        // C x f, strictly positive
};

struct EmOptions {
  std::size_t max_iter = 300;
  double tol = 1e-8;  // relative log-likelihood improvement
  int max_restarts = 5;
  /// Lower clamp applied to per-channel variances. Constant channels (e.g.
  /// setpoint-pinned magnitudes) legitimately carry zero sample variance and
  /// are floored here instead of being treated as EM degeneracy.
  double var_floor = 1e-9;
};

/// Expectation-maximization fit of a C-component diagonal mixture to
/// `samples` (n x f). Requires n >= 10*C. The log-likelihood is asserted
/// non-decreasing every iteration. A component whose variance collapses
/// below 1e-10 on a genuinely varying channel triggers a seeded restart
/// (up to max_restarts), after which NumericalError is thrown.
GmmPrior fit_gmm_em(const numerics::Matrix& samples, std::size_t components,
                    std::uint64_t seed, const EmOptions& opt = {});

/// Per-sample log-likelihood of data under a prior (test hook).
double gmm_log_likelihood(const GmmPrior& prior, const numerics::Matrix& samples);

}  // namespace cgnnse::datagen
