#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgnnse/grid.hpp"
#include "cgnnse/matrix.hpp"
#include "cgnnse/tape.hpp"

namespace cgnnse::gnn {

struct Architecture {
  std::size_t input_features = 2;
  std::size_t hidden = 50;
  std::size_t heads = 4;
  std::size_t mid_gcn_layers = 0;  // extra plain GCN layers after the first stage
  std::size_t components = 3;      // mixture components per bus
  double leaky_slope = 0.2;
  bool use_gat = true;  // false replaces the attention stage by an equal-width GCN
  std::size_t outputs = 2;

  /// Output width of the attention stage (or its GCN substitute).
  std::size_t stage2_width() const { return heads * hidden; }
};

/// Per-bus mixture parameters in unconstrained form: weight logits decode to
/// the simplex by row softmax, log-variances to positive reals by exp. Rows
/// at buses that are observed during training are frozen (their gradients
/// are exactly zero because the forward pass never reads them there) but
/// keep EM-fitted values so a bus can fall back to its prior when its PMU
/// drops out at inference time.
struct GmmParams {
  numerics::Matrix logits;                 // N x C
  std::vector<numerics::Matrix> means;     // C matrices, N x f
  std::vector<numerics::Matrix> log_vars;  // C matrices, N x f
};

/// Mutable view of one named parameter matrix.
struct ParamRef {
  std::string name;
  numerics::Matrix* value;
};

/// Tape nodes for every parameter, in the order of parameters().
struct ParamNodes {
  std::vector<numerics::NodeId> nodes;
};

struct ForwardCapture {
  std::vector<numerics::Matrix> attention;  // one N x N matrix per head
};

/// One attention head: propagation weight plus the attention vector split
/// into its source/destination halves (a = [a_src; a_dst]).
struct GatHead {
  numerics::Matrix w;      // f_out x f_in
  numerics::Matrix a_src;  // f_out x 1
  numerics::Matrix a_dst;  // f_out x 1
};

/// The estimator network: mixture-aware expected-activation first layer,
/// optional plain GCN layers, a multi-head attention stage and an affine
/// head. Immutable during inference; training mutates parameters through
/// parameters() under exclusive access.
struct CgnnModel {
  Architecture arch;
  grid::AdjacencyPack adj;        // default topology (swappable per predict call)
  std::vector<bool> train_mask;   // observability mask the model was trained with
  std::uint64_t grid_hash = 0;

  numerics::Matrix w1;  // hidden x f
  GmmParams gmm;
  std::vector<numerics::Matrix> mid_weights;  // hidden x hidden
  std::vector<GatHead> gat;                   // arch.heads entries when use_gat
  numerics::Matrix sub_gcn_w;                 // stage2_width x hidden when !use_gat
  numerics::Matrix head_w;                    // stage2_width x outputs
  numerics::Matrix head_b;                    // 1 x outputs

  static CgnnModel make(const Architecture& a, grid::AdjacencyPack adjacency,
                        std::vector<bool> mask, std::uint64_t grid_hash);

  std::size_t bus_count() const { return train_mask.size(); }
  std::vector<ParamRef> parameters();
  std::vector<ParamRef> parameters() const;  // names/shapes only (values const-cast)

  /// Registers every parameter on the tape (as trainable leaves when
  /// `trainable`, else as constants) in parameters() order.
  ParamNodes register_params(numerics::Tape& tape, bool trainable) const;

  /// Builds the full forward graph and returns the N x 2 prediction node.
  numerics::NodeId build_forward(numerics::Tape& tape, const ParamNodes& params,
                                 const grid::AdjacencyPack& topology,
                                 const numerics::Matrix& features,
                                 const std::vector<bool>& mask,
                                 ForwardCapture* capture = nullptr) const;

  /// Forward pass on a scratch tape. `topology` defaults to the stored
  /// adjacency; `mask` may mark fewer observed buses than train_mask (PMU
  /// failure falls back to the stored mixture prior).
  numerics::Matrix predict(const numerics::Matrix& features, const std::vector<bool>& mask,
                           const grid::AdjacencyPack* topology = nullptr,
                           ForwardCapture* capture = nullptr) const;

  /// First-stage output only (the mixture expected-activation layer).
  numerics::Matrix expected_activation(const numerics::Matrix& features,
                                       const std::vector<bool>& mask,
                                       const grid::AdjacencyPack* topology = nullptr) const;

  /// N x f matrix of first-layer input means: measurements at observed rows,
  /// mixture-weighted means elsewhere.
  numerics::Matrix mean_input(const numerics::Matrix& features,
                              const std::vector<bool>& mask) const;

  void save(const std::string& path) const;
  static CgnnModel load(const std::string& path);
};

/// Plain GCN propagation relu(A_norm X W^T); shares kernels with the model
/// forward so the full-observability reduction is bit-exact.
numerics::Matrix gcn_forward(const numerics::Matrix& w, const grid::AdjacencyPack& adj,
                             const numerics::Matrix& x);

/// Standalone multi-head attention stage (unit-test surface).
numerics::Matrix mhgat_forward(const std::vector<GatHead>& heads,
                               const grid::AdjacencyPack& adj, const numerics::Matrix& x,
                               double leaky_slope,
                               std::vector<numerics::Matrix>* attention_out = nullptr);

}  // namespace cgnnse::gnn
