#pragma once

#include <cstdint>
#include <vector>

#include "cgnnse/matrix.hpp"

namespace cgnnse::numerics {

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
  kInput,
  kParam,
  kAdd,
  kSub,
  kHadamard,
  kMatMul,
  kTranspose,
  kScale,
  kAddRowVector,
  kRelu,
  kLeakyRelu,
  kExp,
  kErf,
  kNr,
  kExpectedRelu,
  kSoftmaxRows,
  kMaskedSoftmaxRows,
  kScaleRows,
  kScatterRows,
  kBlendRows,
  kSliceCol,
  kConcatCols,
  kBroadcastSumOuter,
  kSum,
};

/// Reverse-mode differentiation tape over Matrix values.
///
/// Forward calls append nodes; backward() replays the record in reverse and
/// accumulates one adjoint per node. Leaves registered through param() are
/// the trainable surface: their adjoints are defined (exactly zero when a
/// leaf does not reach the loss). A tape is single-threaded; concurrent
/// gradient evaluation uses one tape per worker.
class Tape {
public:
  /// Constant leaf: participates in values, never receives gradient.
  NodeId input(Matrix value);
  /// Trainable leaf.
  NodeId param(Matrix value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId scale(NodeId a, double c);
  /// a + broadcast of a 1xC row vector over every row of a.
  NodeId add_row_vector(NodeId a, NodeId row);
  NodeId relu(NodeId a);
  NodeId leaky_relu(NodeId a, double slope);
  NodeId exp(NodeId a);
  NodeId erf(NodeId a);
  NodeId nr(NodeId a);
  /// Elementwise E[max(N(mean_ij, var_ij), 0)] with the analytic
  /// zero-variance limit below kVarEpsilon.
  NodeId expected_relu(NodeId mean, NodeId var);
  NodeId softmax_rows(NodeId a);
  /// Row softmax restricted to entries where mask != 0; other entries are 0.
  NodeId masked_softmax_rows(NodeId a, Matrix mask);
  /// out_ij = a_ij * col_i, col is rows x 1.
  NodeId scale_rows(NodeId a, NodeId col);
  /// Places row r of `a` at row target_rows[r] of an out_rows-tall zero
  /// matrix. Target rows must be distinct.
  NodeId scatter_rows(NodeId a, std::vector<std::size_t> target_rows, std::size_t out_rows);
  /// Row i of the result comes from `a` where row_mask[i] is nonzero and
  /// from `b` otherwise. The mask is a constant rows x 1 matrix.
  NodeId blend_rows(Matrix row_mask, NodeId a, NodeId b);
  NodeId slice_col(NodeId a, std::size_t j);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  /// u, v are n x 1; out_ij = u_i + v_j.
  NodeId broadcast_sum_outer(NodeId u, NodeId v);
  /// Reduction to a 1x1 scalar.
  NodeId sum(NodeId a);

  const Matrix& value(NodeId id) const { return nodes_[id].val; }

  /// Accumulates d(loss)/d(node) for every node. `loss` must be 1x1.
  void backward(NodeId loss);

  const Matrix& adjoint(NodeId id) const { return nodes_[id].adj; }
  bool is_param(NodeId id) const { return nodes_[id].op == Op::kParam; }
  std::size_t size() const { return nodes_.size(); }

  /// Calls fn(input value matrix) for every relu / leaky-relu node; lets
  /// tests confirm sampled points sit away from activation kinks.
  template <typename Fn>
  void visit_activation_inputs(Fn&& fn) const {
    for (const Node& n : nodes_) {
      if (n.op == Op::kRelu || n.op == Op::kLeakyRelu) fn(nodes_[n.a].val);
    }
  }

private:
  struct Node {
    Op op;
    NodeId a = 0;
    NodeId b = 0;
    double c = 0.0;
    Matrix val;
    Matrix adj;
    Matrix aux;                    // mask (softmax/blend) or cached d/dmean
    Matrix aux2;                   // cached d/dvar for expected_relu
    std::vector<std::size_t> idx;  // scatter targets / concat widths
    std::vector<NodeId> srcs;      // concat inputs
  };

  NodeId push(Node node);
  Matrix& adj(NodeId id) { return nodes_[id].adj; }

  std::vector<Node> nodes_;
};

}  // namespace cgnnse::numerics
