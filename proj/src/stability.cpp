#include "cgnnse/stability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "cgnnse/errors.hpp"
#include "cgnnse/parallel.hpp"
#include "cgnnse/rng.hpp"

namespace cgnnse::stability {

using gnn::CgnnModel;
using nlohmann::json;
using numerics::Matrix;

namespace {

json cert_json(const StabilityCertificate& c) {
  return json{{"lambda", c.lambda},   {"delta", c.delta},   {"epsilon", c.epsilon},
              {"B", c.b_const},       {"L", c.layers},      {"F", c.width},
              {"bound", c.bound},     {"measured", c.measured},
              {"violated", c.violated()}};
}

}  // namespace

std::string StabilityCertificate::to_json() const { return cert_json(*this).dump(2); }

StabilityCertificate certificate(const CgnnModel& model, const grid::AdjacencyPack& base,
                                 const grid::AdjacencyPack& perturbed,
                                 const Matrix& features, const Matrix& features2,
                                 const std::vector<bool>& mask) {
  if (!base.a.same_shape(perturbed.a)) {
    throw InputError("certificate: adjacency dimensions differ");
  }
  StabilityCertificate cert;

  const Matrix base_pred = model.predict(features, mask, &base);
  gnn::ForwardCapture capture;
  const Matrix pert_pred = model.predict(features2, mask, &perturbed, &capture);
  cert.measured = numerics::frobenius_norm(numerics::sub(base_pred, pert_pred));

  cert.epsilon = grid::adjacency_distance(base, perturbed);

  // lambda: column norms of the realized first-layer input means (base side)
  const Matrix x0 = model.mean_input(features, mask);
  for (std::size_t j = 0; j < x0.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < x0.rows(); ++i) s += x0(i, j) * x0(i, j);
    cert.lambda += std::sqrt(s);
  }

  const double norm_a_pert = grid::spectral_norm(perturbed.a_norm);
  double delta = numerics::max_abs(model.w1);
  double b_const = numerics::max_abs(model.w1) * norm_a_pert;
  for (const Matrix& w : model.mid_weights) {
    delta = std::max(delta, numerics::max_abs(w));
    b_const = std::max(b_const, numerics::max_abs(w) * norm_a_pert);
  }
  if (model.arch.use_gat) {
    double attention_norm = norm_a_pert;
    for (const Matrix& alpha : capture.attention) {
      attention_norm = std::max(attention_norm, grid::spectral_norm(alpha));
    }
    for (const gnn::GatHead& h : model.gat) {
      delta = std::max(delta, numerics::max_abs(h.w));
      b_const = std::max(b_const, numerics::max_abs(h.w) * attention_norm);
    }
  } else {
    delta = std::max(delta, numerics::max_abs(model.sub_gcn_w));
    b_const = std::max(b_const, numerics::max_abs(model.sub_gcn_w) * norm_a_pert);
  }
  // head: affine, propagation matrix is the identity
  delta = std::max(delta, numerics::max_abs(model.head_w));
  b_const = std::max(b_const, numerics::max_abs(model.head_w));

  cert.delta = delta;
  cert.b_const = b_const;
  cert.layers = 1 + model.arch.mid_gcn_layers + 1 + 1;
  cert.width = std::max(model.arch.hidden, model.arch.stage2_width());
  const double l = static_cast<double>(cert.layers);
  cert.bound = std::sqrt(2.0) * cert.lambda * cert.delta * cert.epsilon * l *
               std::pow(cert.b_const, l - 1.0) *
               std::pow(static_cast<double>(cert.width), l - 2.0);
  return cert;
}

namespace {

bool islanding_free(const grid::GridGraph& g, const std::vector<std::size_t>& outage) {
  try {
    grid::perturb_topology(g, outage);
    return true;
  } catch (const InputError&) {
    return false;
  }
}

}  // namespace

std::vector<ContingencyResult> sweep_contingencies(const CgnnModel& model,
                                                   const grid::GridGraph& g,
                                                   const datagen::SnapshotDataset& dataset,
                                                   std::size_t snapshot, std::size_t depth,
                                                   std::size_t sample_count,
                                                   std::uint64_t seed, unsigned threads) {
  if (depth < 1) throw InputError("sweep_contingencies: depth must be >= 1");
  if (snapshot >= dataset.size()) throw InputError("sweep_contingencies: snapshot out of range");

  std::vector<std::size_t> in_service;
  for (std::size_t k = 0; k < g.branches.size(); ++k) {
    if (g.branches[k].in_service) in_service.push_back(k);
  }

  std::vector<std::vector<std::size_t>> outages;
  if (depth == 1) {
    for (std::size_t k : in_service) {
      if (islanding_free(g, {k})) outages.push_back({k});
    }
  } else {
    std::set<std::vector<std::size_t>> seen;
    Rng rng = Rng::stream(seed, 0xc0417);
    const std::size_t max_attempts = 200 * std::max<std::size_t>(sample_count, 1);
    for (std::size_t attempt = 0; attempt < max_attempts && outages.size() < sample_count;
         ++attempt) {
      std::vector<std::size_t> pick;
      while (pick.size() < depth) {
        const std::size_t k = in_service[rng.index_below(in_service.size())];
        if (std::find(pick.begin(), pick.end(), k) == pick.end()) pick.push_back(k);
      }
      std::sort(pick.begin(), pick.end());
      if (!seen.insert(pick).second) continue;
      if (islanding_free(g, pick)) outages.push_back(pick);
    }
  }

  const grid::AdjacencyPack base = grid::build_adjacency(g);
  const datagen::Snapshot& snap = dataset.snapshots[snapshot];
  const Matrix features = dataset.feature_matrix(snapshot);

  std::vector<ContingencyResult> results(outages.size());
  parallel_for(outages.size(), threads, [&](std::size_t i) {
    ContingencyResult& res = results[i];
    res.outage_branches = outages[i];
    const grid::GridGraph pert = grid::perturb_topology(g, outages[i]);
    const grid::AdjacencyPack pert_pack = grid::build_adjacency(pert);
    powerflow::Solution sol2;
    try {
      sol2 = powerflow::solve_with_loads(pert, snap.pd_mw, snap.qd_mvar);
    } catch (const NumericalError&) {
      res.evaluated = false;
      return;
    }
    // carry the snapshot's realized measurement errors over to the new state
    Matrix features2(dataset.n_buses, 2);
    for (std::size_t p = 0; p < dataset.pmu_index.size(); ++p) {
      const std::size_t bi = dataset.pmu_index[p];
      const double mag_ratio = snap.vm_meas[p] / snap.vm_true[bi];
      const double ang_offset = snap.va_meas[p] - snap.va_true[bi];
      features2(bi, 0) = sol2.vm[bi] * mag_ratio;
      features2(bi, 1) = sol2.va[bi] + ang_offset;
    }
    res.cert = certificate(model, base, pert_pack, features, features2, dataset.mask);
    res.evaluated = true;
  });
  return results;
}

void write_certificates_csv(const std::string& path,
                            const std::vector<ContingencyResult>& results) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << "outage,lambda,delta,epsilon,B,L,F,bound,measured,violated,evaluated\n";
  for (const ContingencyResult& r : results) {
    std::string branches;
    for (std::size_t i = 0; i < r.outage_branches.size(); ++i) {
      if (i) branches += "+";
      branches += std::to_string(r.outage_branches[i]);
    }
    out << branches << ",";
    if (r.evaluated) {
      const StabilityCertificate& c = r.cert;
      out << c.lambda << "," << c.delta << "," << c.epsilon << "," << c.b_const << ","
          << c.layers << "," << c.width << "," << c.bound << "," << c.measured << ","
          << (c.violated() ? 1 : 0) << ",1\n";
    } else {
      out << ",,,,,,,,0\n";
    }
  }
}

void write_certificates_json(const std::string& path,
                             const std::vector<ContingencyResult>& results) {
  json arr = json::array();
  for (const ContingencyResult& r : results) {
    json row;
    row["outage_branches"] = r.outage_branches;
    row["evaluated"] = r.evaluated;
    if (r.evaluated) row["certificate"] = cert_json(r.cert);
    arr.push_back(row);
  }
  std::ofstream out(path);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << arr.dump(2) << "\n";
}

}  // namespace cgnnse::stability
