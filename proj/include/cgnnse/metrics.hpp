#pragma once

#include <vector>

#include "cgnnse/matrix.hpp"

namespace cgnnse::eval {

struct MetricSet {
  double mape_pct = 0.0;      // magnitude mean absolute percentage error
  double mae_deg = 0.0;       // angle mean absolute error, degrees
  double sigma_y2 = 0.0;      // complex squared error, mean per snapshot
  double wall_ms_per_snapshot = 0.0;
};

/// Metrics of one prediction against truth (both N x 2: magnitude p.u.,
/// angle rad). Throws InputError on shape mismatch or a zero true magnitude.
MetricSet metrics(const numerics::Matrix& prediction, const numerics::Matrix& truth);

/// Aggregate over many snapshots: MAPE/MAE averaged over every (bus,
/// snapshot) pair; sigma_y2 averaged per snapshot.
MetricSet metrics(const std::vector<numerics::Matrix>& predictions,
                  const std::vector<numerics::Matrix>& truths);

}  // namespace cgnnse::eval
