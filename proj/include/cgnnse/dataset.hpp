#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cgnnse/grid.hpp"
#include "cgnnse/kde.hpp"
#include "cgnnse/matrix.hpp"
#include "cgnnse/noise.hpp"
#include "cgnnse/powerflow.hpp"

namespace cgnnse::datagen {

/// One operating condition: converged true state plus the load draw that
/// produced it and the noisy PMU measurements.
struct Snapshot {
  std::vector<double> vm_true;  // N, p.u.
  std::vector<double> va_true;  // N, radians
  std::vector<double> pd_mw;    // N
  std::vector<double> qd_mvar;  // N
  std::vector<double> vm_meas;  // one per PMU bus, p.u.
  std::vector<double> va_meas;  // one per PMU bus, radians
};

struct SnapshotDataset {
  std::uint64_t grid_hash = 0;
  std::size_t n_buses = 0;
  std::vector<int> pmu_buses;           // bus ids, ascending
  std::vector<std::size_t> pmu_index;   // dense bus indices, same order
  std::vector<bool> mask;               // N, true exactly at PMU buses
  NoiseModel noise;
  std::uint64_t seed = 0;
  std::vector<Snapshot> snapshots;

  std::size_t size() const { return snapshots.size(); }
  /// N x 2 feature matrix (vm p.u., va rad) with zero rows off the mask.
  numerics::Matrix feature_matrix(std::size_t snapshot) const;
  /// N x 2 true-state matrix.
  numerics::Matrix state_matrix(std::size_t snapshot) const;
};

/// Converged power-flow states for sampled operating conditions (the stage
/// before measurement noise).
struct TrueStateCollection {
  std::vector<powerflow::Solution> solutions;
  std::vector<std::vector<double>> pd_mw;
  std::vector<std::vector<double>> qd_mvar;
  std::size_t resample_count = 0;  // power-flow retries that were needed
};

/// Synthetic per-load history: nominal * (1 + uniform(-spread, spread)),
/// `points` draws per load bus. Feeds fit_load_kde in the offline pipeline.
std::map<int, std::vector<double>> synth_load_history(const grid::GridGraph& g,
                                                      double spread, std::size_t points,
                                                      std::uint64_t seed);

/// Samples loads from the per-bus KDEs, solves each operating condition and
/// keeps converged ones. Reactive load follows the sampled active load at
/// the bus's nominal power factor. Snapshot k draws from substream
/// (seed, k); non-convergence resamples within the stream (10 tries) so
/// results are identical for any thread count.
TrueStateCollection generate_snapshots(const grid::GridGraph& g,
                                       const std::map<int, LoadDistribution>& dists,
                                       std::size_t count, std::uint64_t seed,
                                       unsigned threads = 1,
                                       const powerflow::SolveOptions& opt = {});

/// Noisy measurements for the true states at the PMU buses. Stream per
/// snapshot: (seed, snapshot index).
void apply_noise(Snapshot& snap, const std::vector<std::size_t>& pmu_index,
                 const NoiseModel& model, Rng& rng);

SnapshotDataset make_dataset(const grid::GridGraph& g, const TrueStateCollection& states,
                             const std::vector<int>& pmu_buses, const NoiseModel& noise,
                             std::uint64_t seed);

/// Versioned binary container: 8-byte magic, little-endian header length,
/// JSON header, raw little-endian float64 blocks. Lossless round trip.
void write_dataset(const std::string& path, const SnapshotDataset& ds);

/// Reads a dataset; when `expected_grid` is non-null its content hash must
/// match the stored one. Truncation diagnostics carry the byte offset.
SnapshotDataset read_dataset(const std::string& path,
                             const grid::GridGraph* expected_grid = nullptr);

}  // namespace cgnnse::datagen
