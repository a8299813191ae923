#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgnnse/dataset.hpp"
#include "cgnnse/metrics.hpp"
#include "cgnnse/model.hpp"
#include "cgnnse/trainer.hpp"
#include "cgnnse/wald.hpp"

namespace cgnnse::eval {

enum class StudyKind {
  kBaseline,
  kTopology,
  kPmuFailure,
  kCombined,
  kNoise,
  kBadData,
  kAttentionAblation,
  kHeadSweep,
  kPmuSetSweep,
};

/// Throws InputError for an unknown kind name.
StudyKind parse_study_kind(const std::string& name);
std::string study_kind_name(StudyKind kind);

struct StudyInputs {
  const grid::GridGraph* grid = nullptr;
  const gnn::CgnnModel* model = nullptr;              // evaluation studies
  const datagen::SnapshotDataset* eval_data = nullptr;
  const datagen::SnapshotDataset* train_data = nullptr;  // stats + training studies
  // second estimator for the noise comparison (model/eval pair), optional
  const gnn::CgnnModel* alt_model = nullptr;
  const datagen::SnapshotDataset* alt_eval_data = nullptr;
  std::string alt_label = "non-gaussian";

  train::TrainConfig train_config;  // used by the training studies
  gnn::Architecture arch;           // base architecture for the training studies
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  unsigned threads = 1;

  std::size_t topology_outages = 5;      // highest-flow single outages
  std::size_t pmu_subset_cap = 64;       // exhaustive below, sampled above
  double alpha = 0.01;                   // bad-data screen false-positive rate
  std::vector<double> bad_data_fractions = {0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<std::size_t> head_counts = {1, 2, 4};
  std::vector<std::vector<int>> pmu_sets;  // pmu_set_sweep
};

/// Prediction metrics of `model` over every snapshot of `data`, optionally
/// with a reduced observability mask, a perturbed topology re-solve, or a
/// Wald screen in front of the estimator.
struct EvalOverrides {
  const std::vector<bool>* mask = nullptr;
  const grid::GridGraph* perturbed_grid = nullptr;  // re-solve truth per snapshot
  const bddc::ChannelStats* screen_stats = nullptr;
  double alpha = 0.01;
};
MetricSet evaluate_model(const gnn::CgnnModel& model, const datagen::SnapshotDataset& data,
                         const EvalOverrides& overrides = {}, unsigned threads = 1);

/// Metrics of the per-bus training-mean predictor on `eval_data`.
MetricSet climatology_metrics(const datagen::SnapshotDataset& train_data,
                              const datagen::SnapshotDataset& eval_data);

/// Rebuilds a dataset's measurement channels for a different PMU set,
/// reusing the stored true states and load draws.
datagen::SnapshotDataset dataset_with_pmus(const grid::GridGraph& g,
                                           const datagen::SnapshotDataset& src,
                                           const std::vector<int>& pmu_buses,
                                           std::uint64_t seed);

/// In-service branch indices ranked by descending base-case from-end
/// apparent power, islanding candidates skipped.
std::vector<std::size_t> rank_outages_by_flow(const grid::GridGraph& g, std::size_t count);

/// Runs one study, writes report.json, CSV tables and SVG plots under
/// inputs.out_dir, and returns the report JSON text.
std::string run_study(StudyKind kind, const StudyInputs& inputs);

}  // namespace cgnnse::eval
