#pragma once

#include <string>
#include <vector>

#include "cgnnse/dataset.hpp"
#include "cgnnse/matrix.hpp"

namespace cgnnse::bddc {

/// Per-channel training statistics for the Wald screen. Channels are laid
/// out (PMU bus, {magnitude, angle}) matching the dataset measurement order.
struct ChannelStats {
  std::vector<int> pmu_buses;
  numerics::Matrix mean;    // P x 2
  numerics::Matrix stddev;  // P x 2, strictly positive
};

struct Correction {
  std::size_t pmu_slot = 0;
  std::size_t channel = 0;  // 0 = magnitude, 1 = angle
  double original = 0.0;
  double replaced_by = 0.0;
};

struct BddcReport {
  std::vector<std::uint8_t> bad;  // one flag per channel, row-major P x 2
  std::vector<Correction> corrections;
  double alpha = 0.0;
  double threshold = 0.0;  // Q^{-1}(alpha/2)

  std::size_t flagged_count() const { return corrections.size(); }
  std::string to_json() const;
};

/// Sample mean / standard deviation of every measured channel over the
/// dataset (noise included). Requires >= 30 snapshots; throws on a
/// zero-variance channel.
ChannelStats fit_stats(const datagen::SnapshotDataset& dataset);

/// Wald test per channel: flag iff |z - mean| / stddev exceeds
/// Q^{-1}(alpha/2); flagged channels are replaced by the training mean,
/// clean ones pass through untouched. Pure function of its arguments.
std::pair<numerics::Matrix, BddcReport> screen(const numerics::Matrix& measurements,
                                               const ChannelStats& stats, double alpha);

}  // namespace cgnnse::bddc
