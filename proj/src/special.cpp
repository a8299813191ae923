#include "cgnnse/special.hpp"

#include <cmath>

#include "cgnnse/errors.hpp"

namespace cgnnse::numerics {

namespace {

// Rational minimax coefficients for the error function (W. J. Cody,
// "Rational Chebyshev approximation for the error function", 1969; the
// classic three-region netlib CALERF split).
constexpr double kErfA[5] = {3.16112374387056560e0, 1.13864154151050156e2,
                             3.77485237685302021e2, 3.20937758913846947e3,
                             1.85777706184603153e-1};
constexpr double kErfB[4] = {2.36012909523441209e1, 2.44024637934444173e2,
                             1.28261652607737228e3, 2.84423683343917062e3};
constexpr double kErfC[9] = {5.64188496988670089e-1, 8.88314979438837594e0,
                             6.61191906371416295e1,  2.98635138197400131e2,
                             8.81952221241769090e2,  1.71204761263407058e3,
                             2.05107837782607147e3,  1.23033935479799725e3,
                             2.15311535474403846e-8};
constexpr double kErfD[8] = {1.57449261107098347e1, 1.17693950891312499e2,
                             5.37181101862009858e2, 1.62138957456669019e3,
                             3.29079923573345963e3, 4.36261909014324716e3,
                             3.43936767414372164e3, 1.23033935480374942e3};
constexpr double kErfP[6] = {3.05326634961232344e-1, 3.60344899949804439e-1,
                             1.25781726111229246e-1, 1.60837851487422766e-2,
                             6.58749161529837803e-4, 1.63153871373020978e-2};
constexpr double kErfQ[5] = {2.56852019228982242e0, 1.87295284992346047e0,
                             5.27905102951428412e-1, 6.05183413124413191e-2,
                             2.33520497626869185e-3};

constexpr double kInvSqrtPi = 5.6418958354775628695e-1;
constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;
constexpr double kSqrt2 = 1.4142135623730950488016887;

// erfc(y) for y in (0.46875, inf), via exp(-y^2) * rational(y). The
// exponential is split so the squared argument loses no low bits.
double erfc_positive_tail(double y) {
  double rational;
  if (y <= 4.0) {
    double num = kErfC[8] * y;
    double den = y;
    for (int i = 0; i < 7; ++i) {
      num = (num + kErfC[i]) * y;
      den = (den + kErfD[i]) * y;
    }
    rational = (num + kErfC[7]) / (den + kErfD[7]);
  } else {
    if (y >= 26.6) return 0.0;  // underflows in double
    const double z = 1.0 / (y * y);
    double num = kErfP[5] * z;
    double den = z;
    for (int i = 0; i < 4; ++i) {
      num = (num + kErfP[i]) * z;
      den = (den + kErfQ[i]) * z;
    }
    rational = z * (num + kErfP[4]) / (den + kErfQ[4]);
    rational = (kInvSqrtPi - rational) / y;
  }
  const double ysq = std::trunc(y * 16.0) / 16.0;
  const double del = (y - ysq) * (y + ysq);
  return std::exp(-ysq * ysq) * std::exp(-del) * rational;
}

}  // namespace

double erf(double z) {
  const double y = std::fabs(z);
  if (y <= 0.46875) {
    const double zz = y * y;
    double num = kErfA[4] * zz;
    double den = zz;
    for (int i = 0; i < 3; ++i) {
      num = (num + kErfA[i]) * zz;
      den = (den + kErfB[i]) * zz;
    }
    return z * (num + kErfA[3]) / (den + kErfB[3]);
  }
  const double tail = erfc_positive_tail(y);
  return z > 0.0 ? 1.0 - tail : tail - 1.0;
}

double erfc(double z) {
  const double y = std::fabs(z);
  if (y <= 0.46875) return 1.0 - erf(z);
  const double tail = erfc_positive_tail(y);
  return z > 0.0 ? tail : 2.0 - tail;
}

double nr(double z) {
  return kInvSqrt2Pi * std::exp(-0.5 * z * z) + 0.5 * z * (1.0 + erf(z / kSqrt2));
}

double std_normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double std_normal_cdf(double z) { return 0.5 * erfc(-z / kSqrt2); }

double expected_relu(double mean, double var) {
  if (var < kVarEpsilon) return mean > 0.0 ? mean : 0.0;
  const double sigma = std::sqrt(var);
  return sigma * nr(mean / sigma);
}

double expected_relu_dmean(double mean, double var) {
  if (var < kVarEpsilon) return mean > 0.0 ? 1.0 : 0.0;
  return std_normal_cdf(mean / std::sqrt(var));
}

double expected_relu_dvar(double mean, double var) {
  if (var < kVarEpsilon) return 0.0;
  const double sigma = std::sqrt(var);
  return std_normal_pdf(mean / sigma) / (2.0 * sigma);
}

double std_normal_upper_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InputError("std_normal_upper_quantile: p must lie in (0, 1)");
  }
  double lo = -40.0, hi = 40.0;
  for (int iter = 0; iter < 200 && hi - lo > 1e-13; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double tail = 0.5 * erfc(mid / kSqrt2);
    if (tail > p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace cgnnse::numerics
