#include "cgnnse/tape.hpp"

#include <cmath>
#include <utility>

#include "cgnnse/errors.hpp"
#include "cgnnse/special.hpp"

namespace cgnnse::numerics {

namespace {
constexpr double kTwoOverSqrtPi = 1.1283791670955125739;
}

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::input(Matrix value) {
  Node n;
  n.op = Op::kInput;
  n.val = std::move(value);
  return push(std::move(n));
}

NodeId Tape::param(Matrix value) {
  Node n;
  n.op = Op::kParam;
  n.val = std::move(value);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.val = numerics::add(nodes_[a].val, nodes_[b].val);
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.val = numerics::sub(nodes_[a].val, nodes_[b].val);
  return push(std::move(n));
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kHadamard;
  n.a = a;
  n.b = b;
  n.val = numerics::hadamard(nodes_[a].val, nodes_[b].val);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kMatMul;
  n.a = a;
  n.b = b;
  n.val = numerics::matmul(nodes_[a].val, nodes_[b].val);
  return push(std::move(n));
}

NodeId Tape::transpose(NodeId a) {
  Node n;
  n.op = Op::kTranspose;
  n.a = a;
  n.val = numerics::transpose(nodes_[a].val);
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.c = c;
  n.val = numerics::scale(nodes_[a].val, c);
  return push(std::move(n));
}

NodeId Tape::add_row_vector(NodeId a, NodeId row) {
  const Matrix& m = nodes_[a].val;
  const Matrix& r = nodes_[row].val;
  if (r.rows() != 1 || r.cols() != m.cols()) {
    throw InputError("add_row_vector: shapes " + shape_string(m) + " and " +
                     shape_string(r) + " do not conform");
  }
  Node n;
  n.op = Op::kAddRowVector;
  n.a = a;
  n.b = row;
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) += r(0, j);
  n.val = std::move(out);
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  Node n;
  n.op = Op::kRelu;
  n.a = a;
  n.val = numerics::relu(nodes_[a].val);
  return push(std::move(n));
}

NodeId Tape::leaky_relu(NodeId a, double slope) {
  Node n;
  n.op = Op::kLeakyRelu;
  n.a = a;
  n.c = slope;
  n.val = numerics::leaky_relu(nodes_[a].val, slope);
  return push(std::move(n));
}

NodeId Tape::exp(NodeId a) {
  Node n;
  n.op = Op::kExp;
  n.a = a;
  n.val = exp_elementwise(nodes_[a].val);
  return push(std::move(n));
}

NodeId Tape::erf(NodeId a) {
  const Matrix& in = nodes_[a].val;
  Node n;
  n.op = Op::kErf;
  n.a = a;
  Matrix out = in;
  for (double& x : out.data()) x = numerics::erf(x);
  n.val = std::move(out);
  return push(std::move(n));
}

NodeId Tape::nr(NodeId a) {
  const Matrix& in = nodes_[a].val;
  Node n;
  n.op = Op::kNr;
  n.a = a;
  Matrix out = in;
  for (double& x : out.data()) x = numerics::nr(x);
  n.val = std::move(out);
  return push(std::move(n));
}

NodeId Tape::expected_relu(NodeId mean, NodeId var) {
  const Matrix& m = nodes_[mean].val;
  const Matrix& s = nodes_[var].val;
  if (!m.same_shape(s)) {
    throw InputError("expected_relu: shapes " + shape_string(m) + " and " +
                     shape_string(s) + " do not match");
  }
  Node n;
  n.op = Op::kExpectedRelu;
  n.a = mean;
  n.b = var;
  // Value and both partials share the same exp/erfc evaluations, so they are
  // computed together here and the partials cached for backward.
  Matrix out(m.rows(), m.cols());
  Matrix dmean(m.rows(), m.cols());
  Matrix dvar(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double mu = m.data()[i];
    const double va = s.data()[i];
    if (va < numerics::kVarEpsilon) {
      out.data()[i] = mu > 0.0 ? mu : 0.0;
      dmean.data()[i] = mu > 0.0 ? 1.0 : 0.0;
      dvar.data()[i] = 0.0;
    } else {
      const double sigma = std::sqrt(va);
      const double z = mu / sigma;
      const double pdf = std_normal_pdf(z);
      const double cdf = std_normal_cdf(z);
      out.data()[i] = sigma * (pdf + z * cdf);
      dmean.data()[i] = cdf;
      dvar.data()[i] = pdf / (2.0 * sigma);
    }
  }
  n.val = std::move(out);
  n.aux = std::move(dmean);
  n.aux2 = std::move(dvar);
  return push(std::move(n));
}

NodeId Tape::softmax_rows(NodeId a) {
  Node n;
  n.op = Op::kSoftmaxRows;
  n.a = a;
  n.val = numerics::softmax_rows(nodes_[a].val);
  return push(std::move(n));
}

NodeId Tape::masked_softmax_rows(NodeId a, Matrix mask) {
  const Matrix& in = nodes_[a].val;
  if (!in.same_shape(mask)) {
    throw InputError("masked_softmax_rows: mask shape " + shape_string(mask) +
                     " does not match " + shape_string(in));
  }
  Node n;
  n.op = Op::kMaskedSoftmaxRows;
  n.a = a;
  Matrix out(in.rows(), in.cols());
  for (std::size_t i = 0; i < in.rows(); ++i) {
    double mx = -HUGE_VAL;
    for (std::size_t j = 0; j < in.cols(); ++j) {
      if (mask(i, j) != 0.0) mx = std::max(mx, in(i, j));
    }
    if (mx == -HUGE_VAL) continue;  // fully masked row stays zero
    double total = 0.0;
    for (std::size_t j = 0; j < in.cols(); ++j) {
      if (mask(i, j) != 0.0) {
        out(i, j) = std::exp(in(i, j) - mx);
        total += out(i, j);
      }
    }
    for (std::size_t j = 0; j < in.cols(); ++j) {
      if (mask(i, j) != 0.0) out(i, j) /= total;
    }
  }
  n.aux = std::move(mask);
  n.val = std::move(out);
  return push(std::move(n));
}

NodeId Tape::scale_rows(NodeId a, NodeId col) {
  const Matrix& m = nodes_[a].val;
  const Matrix& p = nodes_[col].val;
  if (p.cols() != 1 || p.rows() != m.rows()) {
    throw InputError("scale_rows: column shape " + shape_string(p) +
                     " does not conform to " + shape_string(m));
  }
  Node n;
  n.op = Op::kScaleRows;
  n.a = a;
  n.b = col;
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) *= p(i, 0);
  n.val = std::move(out);
  return push(std::move(n));
}

NodeId Tape::scatter_rows(NodeId a, std::vector<std::size_t> target_rows,
                          std::size_t out_rows) {
  const Matrix& m = nodes_[a].val;
  if (target_rows.size() != m.rows()) {
    throw InputError("scatter_rows: target list does not match row count");
  }
  Node n;
  n.op = Op::kScatterRows;
  n.a = a;
  Matrix out(out_rows, m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (target_rows[r] >= out_rows) throw InputError("scatter_rows: target out of range");
    for (std::size_t j = 0; j < m.cols(); ++j) out(target_rows[r], j) = m(r, j);
  }
  n.idx = std::move(target_rows);
  n.val = std::move(out);
  return push(std::move(n));
}

NodeId Tape::blend_rows(Matrix row_mask, NodeId a, NodeId b) {
  const Matrix& va = nodes_[a].val;
  const Matrix& vb = nodes_[b].val;
  if (!va.same_shape(vb)) {
    throw InputError("blend_rows: shapes " + shape_string(va) + " and " +
                     shape_string(vb) + " do not match");
  }
  if (row_mask.rows() != va.rows() || row_mask.cols() != 1) {
    throw InputError("blend_rows: mask must be " + std::to_string(va.rows()) + "x1");
  }
  Node n;
  n.op = Op::kBlendRows;
  n.a = a;
  n.b = b;
  Matrix out(va.rows(), va.cols());
  for (std::size_t i = 0; i < va.rows(); ++i) {
    const Matrix& src = row_mask(i, 0) != 0.0 ? va : vb;
    for (std::size_t j = 0; j < va.cols(); ++j) out(i, j) = src(i, j);
  }
  n.aux = std::move(row_mask);
  n.val = std::move(out);
  return push(std::move(n));
}

NodeId Tape::slice_col(NodeId a, std::size_t j) {
  const Matrix& m = nodes_[a].val;
  if (j >= m.cols()) throw InputError("slice_col: column out of range");
  Node n;
  n.op = Op::kSliceCol;
  n.a = a;
  n.idx = {j};
  Matrix out(m.rows(), 1);
  for (std::size_t i = 0; i < m.rows(); ++i) out(i, 0) = m(i, j);
  n.val = std::move(out);
  return push(std::move(n));
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw InputError("concat_cols: no inputs");
  const std::size_t rows = nodes_[parts[0]].val.rows();
  std::size_t cols = 0;
  for (NodeId p : parts) {
    if (nodes_[p].val.rows() != rows) {
      throw InputError("concat_cols: row counts differ");
    }
    cols += nodes_[p].val.cols();
  }
  Node n;
  n.op = Op::kConcatCols;
  n.srcs = parts;
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (NodeId p : parts) {
    const Matrix& m = nodes_[p].val;
    n.idx.push_back(m.cols());
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) out(i, offset + j) = m(i, j);
    offset += m.cols();
  }
  n.val = std::move(out);
  return push(std::move(n));
}

NodeId Tape::broadcast_sum_outer(NodeId u, NodeId v) {
  const Matrix& a = nodes_[u].val;
  const Matrix& b = nodes_[v].val;
  if (a.cols() != 1 || b.cols() != 1 || a.rows() != b.rows()) {
    throw InputError("broadcast_sum_outer: expects two equal-length columns");
  }
  Node n;
  n.op = Op::kBroadcastSumOuter;
  n.a = u;
  n.b = v;
  const std::size_t sz = a.rows();
  Matrix out(sz, sz);
  for (std::size_t i = 0; i < sz; ++i)
    for (std::size_t j = 0; j < sz; ++j) out(i, j) = a(i, 0) + b(j, 0);
  n.val = std::move(out);
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = Op::kSum;
  n.a = a;
  Matrix out(1, 1);
  out(0, 0) = numerics::sum(nodes_[a].val);
  n.val = std::move(out);
  return push(std::move(n));
}

void Tape::backward(NodeId loss) {
  const Matrix& l = nodes_[loss].val;
  if (l.rows() != 1 || l.cols() != 1) {
    throw InputError("backward: loss must be a 1x1 scalar, got " + shape_string(l));
  }
  for (Node& n : nodes_) n.adj = Matrix(n.val.rows(), n.val.cols());
  nodes_[loss].adj(0, 0) = 1.0;

  for (std::size_t k = nodes_.size(); k-- > 0;) {
    Node& n = nodes_[static_cast<NodeId>(k)];
    const Matrix& g = n.adj;
    switch (n.op) {
      case Op::kInput:
      case Op::kParam:
        break;
      case Op::kAdd: {
        Matrix& da = adj(n.a);
        Matrix& db = adj(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          da.data()[i] += g.data()[i];
          db.data()[i] += g.data()[i];
        }
        break;
      }
      case Op::kSub: {
        Matrix& da = adj(n.a);
        Matrix& db = adj(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          da.data()[i] += g.data()[i];
          db.data()[i] -= g.data()[i];
        }
        break;
      }
      case Op::kHadamard: {
        Matrix& da = adj(n.a);
        Matrix& db = adj(n.b);
        const Matrix& va = nodes_[n.a].val;
        const Matrix& vb = nodes_[n.b].val;
        for (std::size_t i = 0; i < g.size(); ++i) {
          da.data()[i] += g.data()[i] * vb.data()[i];
          db.data()[i] += g.data()[i] * va.data()[i];
        }
        break;
      }
      case Op::kMatMul: {
        const Matrix& va = nodes_[n.a].val;
        const Matrix& vb = nodes_[n.b].val;
        // dA += G * B^T
        {
          Matrix& da = adj(n.a);
          for (std::size_t i = 0; i < da.rows(); ++i)
            for (std::size_t p = 0; p < vb.cols(); ++p) {
              const double gip = g(i, p);
              if (gip == 0.0) continue;
              for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += gip * vb(j, p);
            }
        }
        // dB += A^T * G
        {
          Matrix& db = adj(n.b);
          for (std::size_t p = 0; p < va.rows(); ++p)
            for (std::size_t i = 0; i < db.rows(); ++i) {
              const double api = va(p, i);
              if (api == 0.0) continue;
              for (std::size_t j = 0; j < db.cols(); ++j) db(i, j) += api * g(p, j);
            }
        }
        break;
      }
      case Op::kTranspose: {
        Matrix& da = adj(n.a);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) da(j, i) += g(i, j);
        break;
      }
      case Op::kScale: {
        Matrix& da = adj(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) da.data()[i] += n.c * g.data()[i];
        break;
      }
      case Op::kAddRowVector: {
        Matrix& da = adj(n.a);
        Matrix& dr = adj(n.b);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) {
            da(i, j) += g(i, j);
            dr(0, j) += g(i, j);
          }
        break;
      }
      case Op::kRelu: {
        Matrix& da = adj(n.a);
        const Matrix& x = nodes_[n.a].val;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (x.data()[i] > 0.0) da.data()[i] += g.data()[i];
        }
        break;
      }
      case Op::kLeakyRelu: {
        Matrix& da = adj(n.a);
        const Matrix& x = nodes_[n.a].val;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double xv = x.data()[i];
          // subgradient at the kink fixed to 0
          const double d = xv > 0.0 ? 1.0 : (xv < 0.0 ? n.c : 0.0);
          da.data()[i] += d * g.data()[i];
        }
        break;
      }
      case Op::kExp: {
        Matrix& da = adj(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
          da.data()[i] += g.data()[i] * n.val.data()[i];
        break;
      }
      case Op::kErf: {
        Matrix& da = adj(n.a);
        const Matrix& x = nodes_[n.a].val;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double xv = x.data()[i];
          da.data()[i] += g.data()[i] * kTwoOverSqrtPi * std::exp(-xv * xv);
        }
        break;
      }
      case Op::kNr: {
        Matrix& da = adj(n.a);
        const Matrix& x = nodes_[n.a].val;
        for (std::size_t i = 0; i < g.size(); ++i) {
          da.data()[i] += g.data()[i] * std_normal_cdf(x.data()[i]);
        }
        break;
      }
      case Op::kExpectedRelu: {
        Matrix& dm = adj(n.a);
        Matrix& ds = adj(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double gi = g.data()[i];
          if (gi == 0.0) continue;
          dm.data()[i] += gi * n.aux.data()[i];
          ds.data()[i] += gi * n.aux2.data()[i];
        }
        break;
      }
      case Op::kSoftmaxRows: {
        Matrix& da = adj(n.a);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * n.val(i, j);
          for (std::size_t j = 0; j < g.cols(); ++j)
            da(i, j) += n.val(i, j) * (g(i, j) - dot);
        }
        break;
      }
      case Op::kMaskedSoftmaxRows: {
        Matrix& da = adj(n.a);
        const Matrix& mask = n.aux;
        for (std::size_t i = 0; i < g.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < g.cols(); ++j) {
            if (mask(i, j) != 0.0) dot += g(i, j) * n.val(i, j);
          }
          for (std::size_t j = 0; j < g.cols(); ++j) {
            if (mask(i, j) != 0.0) da(i, j) += n.val(i, j) * (g(i, j) - dot);
          }
        }
        break;
      }
      case Op::kScaleRows: {
        Matrix& da = adj(n.a);
        Matrix& dp = adj(n.b);
        const Matrix& va = nodes_[n.a].val;
        const Matrix& p = nodes_[n.b].val;
        for (std::size_t i = 0; i < g.rows(); ++i) {
          double rowdot = 0.0;
          for (std::size_t j = 0; j < g.cols(); ++j) {
            da(i, j) += g(i, j) * p(i, 0);
            rowdot += g(i, j) * va(i, j);
          }
          dp(i, 0) += rowdot;
        }
        break;
      }
      case Op::kScatterRows: {
        Matrix& da = adj(n.a);
        for (std::size_t r = 0; r < da.rows(); ++r)
          for (std::size_t j = 0; j < da.cols(); ++j) da(r, j) += g(n.idx[r], j);
        break;
      }
      case Op::kBlendRows: {
        Matrix& da = adj(n.a);
        Matrix& db = adj(n.b);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          Matrix& target = n.aux(i, 0) != 0.0 ? da : db;
          for (std::size_t j = 0; j < g.cols(); ++j) target(i, j) += g(i, j);
        }
        break;
      }
      case Op::kSliceCol: {
        Matrix& da = adj(n.a);
        for (std::size_t i = 0; i < g.rows(); ++i) da(i, n.idx[0]) += g(i, 0);
        break;
      }
      case Op::kConcatCols: {
        std::size_t offset = 0;
        for (std::size_t s = 0; s < n.srcs.size(); ++s) {
          Matrix& dp = adj(n.srcs[s]);
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < n.idx[s]; ++j) dp(i, j) += g(i, offset + j);
          offset += n.idx[s];
        }
        break;
      }
      case Op::kBroadcastSumOuter: {
        Matrix& du = adj(n.a);
        Matrix& dv = adj(n.b);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) {
            du(i, 0) += g(i, j);
            dv(j, 0) += g(i, j);
          }
        break;
      }
      case Op::kSum: {
        Matrix& da = adj(n.a);
        const double s = g(0, 0);
        for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] += s;
        break;
      }
    }
  }
}

}  // namespace cgnnse::numerics
