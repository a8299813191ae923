#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cgnnse/dataset.hpp"
#include "cgnnse/model.hpp"

namespace cgnnse::train {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 10;
  double learning_rate = 1e-3;
  std::size_t patience = 25;  // early-stop patience in epochs
  double min_delta = 0.0;     // required validation improvement
  double val_fraction = 0.1;
  std::uint64_t seed = 1;
  enum class Optimizer { kSgd, kAdam } optimizer = Optimizer::kAdam;
  unsigned threads = 1;  // 1 = bit-reproducible serial path
  std::size_t checkpoint_every = 0;
  std::string checkpoint_dir;
};

struct EpochRecord {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t stopped_epoch = 0;  // 1-based; == epochs.size() unless early stop hit
  std::size_t best_epoch = 0;     // 1-based epoch whose parameters were returned
  double best_val_loss = 0.0;
  double initial_val_loss = 0.0;

  std::string to_json() const;
  void write_json(const std::string& path) const;
};

/// Early-stopping bookkeeping: track the best validation loss and signal a
/// stop after `patience` epochs without an improvement of at least min_delta.
class EarlyStopper {
public:
  EarlyStopper(std::size_t patience, double min_delta)
      : patience_(patience), min_delta_(min_delta) {}

  /// Returns true when this epoch's loss is a new best.
  bool observe(double val_loss) {
    if (val_loss < best_ - min_delta_ || first_) {
      best_ = val_loss;
      first_ = false;
      bad_epochs_ = 0;
      return true;
    }
    ++bad_epochs_;
    return false;
  }
  bool should_stop() const { return bad_epochs_ > patience_; }
  double best() const { return best_; }

private:
  std::size_t patience_;
  double min_delta_;
  double best_ = 0.0;
  bool first_ = true;
  std::size_t bad_epochs_ = 0;
};

/// Mean squared error over all buses, both channels, all batch snapshots
/// (p.u. and radians respectively).
double mse_loss(const numerics::Matrix& prediction, const numerics::Matrix& target);

/// Fresh model: network weights from a seeded uniform fan-based scheme
/// (Glorot bounds sqrt(6/(fan_in+fan_out))), head bias at the training-split
/// per-channel target means, and per-bus mixture parameters from an EM fit
/// of the training-split true states (components = arch.components).
gnn::CgnnModel init_model(const datagen::SnapshotDataset& dataset,
                          const grid::GridGraph& g, const gnn::Architecture& arch,
                          std::uint64_t seed);

/// Deterministic train/validation split of [0, n) by seeded shuffle.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(
    std::size_t n, double val_fraction, std::uint64_t seed);

/// Joint gradient-descent optimization of network and mixture parameters
/// with shuffled mini-batches, per-epoch validation, early stopping and
/// best-parameter restoration. Throws NumericalError (naming the epoch) if
/// the loss turns non-finite.
std::pair<gnn::CgnnModel, TrainReport> fit(gnn::CgnnModel model,
                                           const datagen::SnapshotDataset& dataset,
                                           const TrainConfig& config);

/// Mean validation-style MSE of a model over the given snapshot indices.
double evaluate_loss(const gnn::CgnnModel& model, const datagen::SnapshotDataset& dataset,
                     const std::vector<std::size_t>& indices);

}  // namespace cgnnse::train
