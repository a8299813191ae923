#include "cgnnse/metrics.hpp"

#include <cmath>
#include <complex>

#include "cgnnse/errors.hpp"

namespace cgnnse::eval {

namespace {
constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;
}

MetricSet metrics(const numerics::Matrix& prediction, const numerics::Matrix& truth) {
  return metrics(std::vector<numerics::Matrix>{prediction},
                 std::vector<numerics::Matrix>{truth});
}

MetricSet metrics(const std::vector<numerics::Matrix>& predictions,
                  const std::vector<numerics::Matrix>& truths) {
  if (predictions.size() != truths.size() || predictions.empty()) {
    throw InputError("metrics: prediction/truth snapshot counts differ or are empty");
  }
  MetricSet out;
  double mape = 0.0, mae = 0.0, sigma = 0.0;
  std::size_t rows = 0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const numerics::Matrix& p = predictions[k];
    const numerics::Matrix& y = truths[k];
    if (!p.same_shape(y) || p.cols() != 2) {
      throw InputError("metrics: shapes " + numerics::shape_string(p) + " and " +
                       numerics::shape_string(y) + " must match as Nx2");
    }
    double snap_sigma = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
      if (y(i, 0) == 0.0) {
        throw InputError("metrics: zero true magnitude at row " + std::to_string(i));
      }
      mape += std::fabs(p(i, 0) - y(i, 0)) / std::fabs(y(i, 0));
      mae += std::fabs(p(i, 1) - y(i, 1));
      const std::complex<double> yp = std::polar(p(i, 0), p(i, 1));
      const std::complex<double> yt = std::polar(y(i, 0), y(i, 1));
      snap_sigma += std::norm(yp - yt);
    }
    sigma += snap_sigma;
    rows += p.rows();
  }
  out.mape_pct = 100.0 * mape / static_cast<double>(rows);
  out.mae_deg = kRadToDeg * mae / static_cast<double>(rows);
  out.sigma_y2 = sigma / static_cast<double>(predictions.size());
  return out;
}

}  // namespace cgnnse::eval
