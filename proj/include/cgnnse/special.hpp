#pragma once

namespace cgnnse::numerics {

/// Gauss error function, rational approximation (Cody-style region split).
/// Absolute error below 1e-14 on all finite inputs; does not delegate to
/// platform math so results are identical across targets.
double erf(double z);

/// Complementary error function with the same implementation pedigree.
double erfc(double z);

/// Expected positive part of a unit-variance Gaussian shifted to mean z:
/// (1/sqrt(2*pi))*exp(-z^2/2) + (z/2)*(1 + erf(z/sqrt(2))).
/// Always >= max(z, 0); tends to z for large z and to 0 for very negative z.
double nr(double z);

double std_normal_pdf(double z);
double std_normal_cdf(double z);

/// E[max(g, 0)] for g ~ N(mean, var). Below `var_epsilon` the exact
/// zero-variance limit relu(mean) is returned; the two branches agree to
/// better than 1e-6 at the switch.
inline constexpr double kVarEpsilon = 1e-12;
double expected_relu(double mean, double var);
/// Partial derivatives of expected_relu, matching its branch structure.
double expected_relu_dmean(double mean, double var);
double expected_relu_dvar(double mean, double var);

/// Inverse of the standard normal upper-tail function Q(y) = P(N(0,1) > y),
/// solved by bisection on the erfc-based tail to 1e-12. Requires 0 < p < 1.
double std_normal_upper_quantile(double p);

}  // namespace cgnnse::numerics
