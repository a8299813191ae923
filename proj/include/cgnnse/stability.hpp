#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgnnse/dataset.hpp"
#include "cgnnse/model.hpp"

namespace cgnnse::stability {

/// Constants of the output-perturbation bound
///   sqrt(2) * lambda * delta * epsilon * L * B^(L-1) * F^(L-2)
/// together with the realized output distance. The layer mapping is:
/// L counts weight-bearing propagation stages including the affine head,
/// F is the widest hidden width, delta the largest absolute propagation
/// weight, and B the largest |w| * ||P|| over layers where P is that
/// layer's operative propagation matrix (normalized adjacency for the
/// convolutional stages, the stricter of adjacency and per-head attention
/// matrices for the attention stage, identity for the head).
struct StabilityCertificate {
  double lambda = 0.0;    // sum of first-layer input feature column norms
  double delta = 0.0;     // max |w| over propagation weights
  double epsilon = 0.0;   // ||A - A'||_2 of the binary adjacencies
  double b_const = 0.0;   // max layer gain bound
  std::size_t layers = 0; // L
  std::size_t width = 0;  // F
  double bound = 0.0;
  double measured = 0.0;  // Frobenius distance between the two predictions

  bool violated() const { return measured > bound; }
  std::string to_json() const;
};

/// Evaluates the certificate for one topology change. `features` /
/// `features2` are the realized first-layer inputs (N x 2 masked
/// measurement matrices) under the base and perturbed topologies.
StabilityCertificate certificate(const gnn::CgnnModel& model,
                                 const grid::AdjacencyPack& base,
                                 const grid::AdjacencyPack& perturbed,
                                 const numerics::Matrix& features,
                                 const numerics::Matrix& features2,
                                 const std::vector<bool>& mask);

struct ContingencyResult {
  std::vector<std::size_t> outage_branches;
  bool evaluated = false;  // false when the perturbed power flow diverged
  StabilityCertificate cert;
};

/// Sweeps contingencies on one dataset snapshot: exhaustive non-islanding
/// single outages for depth 1; `sample_count` seeded random non-islanding
/// outage sets for depth >= 2. The perturbed grid is re-solved at the
/// snapshot's load draw and the snapshot's realized measurement errors are
/// carried over to the perturbed features.
std::vector<ContingencyResult> sweep_contingencies(
    const gnn::CgnnModel& model, const grid::GridGraph& g,
    const datagen::SnapshotDataset& dataset, std::size_t snapshot, std::size_t depth,
    std::size_t sample_count, std::uint64_t seed, unsigned threads = 1);

void write_certificates_csv(const std::string& path,
                            const std::vector<ContingencyResult>& results);
void write_certificates_json(const std::string& path,
                             const std::vector<ContingencyResult>& results);

}  // namespace cgnnse::stability
