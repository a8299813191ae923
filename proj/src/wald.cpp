#include "cgnnse/wald.hpp"

#include <cmath>

#include <json.hpp>

#include "cgnnse/errors.hpp"
#include "cgnnse/special.hpp"

namespace cgnnse::bddc {

using nlohmann::json;
using numerics::Matrix;

std::string BddcReport::to_json() const {
  json j;
  j["alpha"] = alpha;
  j["threshold"] = threshold;
  json flags = json::array();
  for (std::uint8_t b : bad) flags.push_back(static_cast<int>(b));
  j["bad"] = flags;
  json corr = json::array();
  for (const Correction& c : corrections) {
    corr.push_back({{"pmu_slot", c.pmu_slot},
                    {"channel", c.channel},
                    {"original", c.original},
                    {"replaced_by", c.replaced_by}});
  }
  j["corrections"] = corr;
  return j.dump(2);
}

ChannelStats fit_stats(const datagen::SnapshotDataset& dataset) {
  const std::size_t s = dataset.size();
  if (s < 30) {
    throw InputError("fit_stats: need at least 30 snapshots, got " + std::to_string(s));
  }
  const std::size_t p = dataset.pmu_buses.size();
  ChannelStats stats;
  stats.pmu_buses = dataset.pmu_buses;
  stats.mean = Matrix(p, 2);
  stats.stddev = Matrix(p, 2);
  for (std::size_t i = 0; i < p; ++i) {
    double sum_m = 0.0, sum_a = 0.0;
    for (const datagen::Snapshot& snap : dataset.snapshots) {
      sum_m += snap.vm_meas[i];
      sum_a += snap.va_meas[i];
    }
    stats.mean(i, 0) = sum_m / static_cast<double>(s);
    stats.mean(i, 1) = sum_a / static_cast<double>(s);
    double var_m = 0.0, var_a = 0.0;
    for (const datagen::Snapshot& snap : dataset.snapshots) {
      const double dm = snap.vm_meas[i] - stats.mean(i, 0);
      const double da = snap.va_meas[i] - stats.mean(i, 1);
      var_m += dm * dm;
      var_a += da * da;
    }
    var_m /= static_cast<double>(s - 1);
    var_a /= static_cast<double>(s - 1);
    if (var_m <= 0.0 || var_a <= 0.0) {
      throw InputError("fit_stats: zero-variance channel at PMU bus " +
                       std::to_string(dataset.pmu_buses[i]));
    }
    stats.stddev(i, 0) = std::sqrt(var_m);
    stats.stddev(i, 1) = std::sqrt(var_a);
  }
  return stats;
}

std::pair<Matrix, BddcReport> screen(const Matrix& measurements, const ChannelStats& stats,
                                     double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InputError("screen: alpha must lie in the open interval (0, 1)");
  }
  if (!measurements.same_shape(stats.mean)) {
    throw InputError("screen: measurement shape " + numerics::shape_string(measurements) +
                     " does not match stats " + numerics::shape_string(stats.mean));
  }
  BddcReport report;
  report.alpha = alpha;
  report.threshold = numerics::std_normal_upper_quantile(alpha / 2.0);
  report.bad.assign(measurements.size(), 0);

  Matrix corrected = measurements;
  for (std::size_t i = 0; i < measurements.rows(); ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      const double stat =
          std::fabs(measurements(i, j) - stats.mean(i, j)) / stats.stddev(i, j);
      if (stat > report.threshold) {
        report.bad[i * 2 + j] = 1;
        report.corrections.push_back(
            Correction{i, j, measurements(i, j), stats.mean(i, j)});
        corrected(i, j) = stats.mean(i, j);
      }
    }
  }
  return {std::move(corrected), std::move(report)};
}

}  // namespace cgnnse::bddc
