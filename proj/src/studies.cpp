#include "cgnnse/studies.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "cgnnse/errors.hpp"
#include "cgnnse/parallel.hpp"
#include "cgnnse/svg.hpp"

namespace cgnnse::eval {

using datagen::SnapshotDataset;
using gnn::CgnnModel;
using nlohmann::json;
using numerics::Matrix;

StudyKind parse_study_kind(const std::string& name) {
  if (name == "baseline") return StudyKind::kBaseline;
  if (name == "topology") return StudyKind::kTopology;
  if (name == "pmu_failure") return StudyKind::kPmuFailure;
  if (name == "combined") return StudyKind::kCombined;
  if (name == "noise") return StudyKind::kNoise;
  if (name == "bad_data") return StudyKind::kBadData;
  if (name == "attention_ablation") return StudyKind::kAttentionAblation;
  if (name == "head_sweep") return StudyKind::kHeadSweep;
  if (name == "pmu_set_sweep") return StudyKind::kPmuSetSweep;
  throw InputError("unknown study kind '" + name +
                   "' (expected baseline|topology|pmu_failure|combined|noise|bad_data|"
                   "attention_ablation|head_sweep|pmu_set_sweep)");
}

std::string study_kind_name(StudyKind kind) {
  switch (kind) {
    case StudyKind::kBaseline: return "baseline";
    case StudyKind::kTopology: return "topology";
    case StudyKind::kPmuFailure: return "pmu_failure";
    case StudyKind::kCombined: return "combined";
    case StudyKind::kNoise: return "noise";
    case StudyKind::kBadData: return "bad_data";
    case StudyKind::kAttentionAblation: return "attention_ablation";
    case StudyKind::kHeadSweep: return "head_sweep";
    case StudyKind::kPmuSetSweep: return "pmu_set_sweep";
  }
  return "?";
}

MetricSet evaluate_model(const CgnnModel& model, const SnapshotDataset& data,
                         const EvalOverrides& overrides, unsigned threads) {
  const std::size_t n_snap = data.size();
  if (n_snap == 0) throw InputError("evaluate_model: empty dataset");
  const std::vector<bool>& mask = overrides.mask ? *overrides.mask : data.mask;

  std::optional<grid::AdjacencyPack> pert_pack;
  if (overrides.perturbed_grid) {
    pert_pack = grid::build_adjacency(*overrides.perturbed_grid);
  }

  std::vector<Matrix> preds(n_snap), truths(n_snap);
  std::vector<double> wall_ms(n_snap, 0.0);
  parallel_for(n_snap, threads, [&](std::size_t k) {
    const datagen::Snapshot& snap = data.snapshots[k];
    Matrix truth = data.state_matrix(k);
    Matrix measurements(data.pmu_index.size(), 2);
    for (std::size_t p = 0; p < data.pmu_index.size(); ++p) {
      measurements(p, 0) = snap.vm_meas[p];
      measurements(p, 1) = snap.va_meas[p];
    }
    if (overrides.perturbed_grid) {
      // re-solve the snapshot's load draw on the changed topology and carry
      // the realized measurement errors over
      const powerflow::Solution sol =
          powerflow::solve_with_loads(*overrides.perturbed_grid, snap.pd_mw, snap.qd_mvar);
      for (std::size_t p = 0; p < data.pmu_index.size(); ++p) {
        const std::size_t bi = data.pmu_index[p];
        measurements(p, 0) = sol.vm[bi] * (snap.vm_meas[p] / snap.vm_true[bi]);
        measurements(p, 1) = sol.va[bi] + (snap.va_meas[p] - snap.va_true[bi]);
      }
      for (std::size_t i = 0; i < data.n_buses; ++i) {
        truth(i, 0) = sol.vm[i];
        truth(i, 1) = sol.va[i];
      }
    }

    const auto t0 = std::chrono::steady_clock::now();
    if (overrides.screen_stats) {
      measurements = bddc::screen(measurements, *overrides.screen_stats, overrides.alpha).first;
    }
    Matrix features(data.n_buses, 2);
    for (std::size_t p = 0; p < data.pmu_index.size(); ++p) {
      const std::size_t bi = data.pmu_index[p];
      if (!mask[bi]) continue;  // failed PMU: leave the row to the prior
      features(bi, 0) = measurements(p, 0);
      features(bi, 1) = measurements(p, 1);
    }
    preds[k] = model.predict(features, mask, pert_pack ? &*pert_pack : nullptr);
    wall_ms[k] =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    truths[k] = std::move(truth);
  });

  MetricSet m = metrics(preds, truths);
  m.wall_ms_per_snapshot =
      std::accumulate(wall_ms.begin(), wall_ms.end(), 0.0) / static_cast<double>(n_snap);
  return m;
}

MetricSet climatology_metrics(const SnapshotDataset& train_data,
                              const SnapshotDataset& eval_data) {
  if (train_data.size() == 0) throw InputError("climatology: empty training data");
  Matrix mean(train_data.n_buses, 2);
  for (const datagen::Snapshot& s : train_data.snapshots) {
    for (std::size_t i = 0; i < train_data.n_buses; ++i) {
      mean(i, 0) += s.vm_true[i];
      mean(i, 1) += s.va_true[i];
    }
  }
  for (double& x : mean.data()) x /= static_cast<double>(train_data.size());

  std::vector<Matrix> preds(eval_data.size(), mean), truths(eval_data.size());
  for (std::size_t k = 0; k < eval_data.size(); ++k) truths[k] = eval_data.state_matrix(k);
  return metrics(preds, truths);
}

SnapshotDataset dataset_with_pmus(const grid::GridGraph& g, const SnapshotDataset& src,
                                  const std::vector<int>& pmu_buses, std::uint64_t seed) {
  datagen::TrueStateCollection coll;
  coll.solutions.resize(src.size());
  coll.pd_mw.resize(src.size());
  coll.qd_mvar.resize(src.size());
  for (std::size_t k = 0; k < src.size(); ++k) {
    coll.solutions[k].vm = src.snapshots[k].vm_true;
    coll.solutions[k].va = src.snapshots[k].va_true;
    coll.pd_mw[k] = src.snapshots[k].pd_mw;
    coll.qd_mvar[k] = src.snapshots[k].qd_mvar;
  }
  return datagen::make_dataset(g, coll, pmu_buses, src.noise, seed);
}

std::vector<std::size_t> rank_outages_by_flow(const grid::GridGraph& g, std::size_t count) {
  const powerflow::Solution base = powerflow::solve(g);
  const std::vector<double> flows = powerflow::branch_flow_mva(g, base);
  std::vector<std::size_t> order(flows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return flows[a] > flows[b]; });
  std::vector<std::size_t> out;
  for (std::size_t k : order) {
    if (out.size() >= count) break;
    if (!g.branches[k].in_service) continue;
    try {
      grid::perturb_topology(g, {k});
    } catch (const InputError&) {
      continue;  // islanding outage, skip
    }
    out.push_back(k);
  }
  return out;
}

namespace {

json row_json(const std::string& label, const MetricSet& m) {
  return json{{"label", label},
              {"mape_pct", m.mape_pct},
              {"mae_deg", m.mae_deg},
              {"sigma_y2", m.sigma_y2},
              {"wall_ms_per_snapshot", m.wall_ms_per_snapshot}};
}

void write_rows_csv(const std::string& path, const json& rows) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << "label,mape_pct,mae_deg,sigma_y2,wall_ms_per_snapshot\n";
  for (const json& r : rows) {
    out << r.at("label").get<std::string>() << "," << r.at("mape_pct").get<double>() << ","
        << r.at("mae_deg").get<double>() << "," << r.at("sigma_y2").get<double>() << ","
        << r.at("wall_ms_per_snapshot").get<double>() << "\n";
  }
}

void write_rows_chart(const std::string& path, const std::string& title, const json& rows) {
  std::vector<std::string> labels;
  ChartSeries mape{"magnitude MAPE (%)", {}};
  ChartSeries mae{"angle MAE (deg)", {}};
  for (const json& r : rows) {
    labels.push_back(r.at("label").get<std::string>());
    mape.values.push_back(r.at("mape_pct").get<double>());
    mae.values.push_back(r.at("mae_deg").get<double>());
  }
  write_bar_chart_svg(path, title, labels, {mape, mae}, "error");
}

std::string outage_label(const grid::GridGraph& g, std::size_t branch) {
  return std::to_string(g.branches[branch].from_bus) + "-" +
         std::to_string(g.branches[branch].to_bus);
}

double spearman_rank_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[order[i]] = static_cast<double>(i);
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mean = (static_cast<double>(n) - 1.0) / 2.0;
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (rx[i] - mean) * (ry[i] - mean);
    dx += (rx[i] - mean) * (rx[i] - mean);
    dy += (ry[i] - mean) * (ry[i] - mean);
  }
  return num / std::sqrt(dx * dy);
}

// All size-r subsets when their count fits the cap, else `cap` distinct
// seeded samples.
std::vector<std::vector<int>> pmu_subsets(const std::vector<int>& buses, std::size_t r,
                                          std::size_t cap, Rng& rng) {
  std::vector<std::vector<int>> out;
  const std::size_t n = buses.size();
  double combos = 1.0;
  for (std::size_t i = 0; i < r; ++i) {
    combos *= static_cast<double>(n - i) / static_cast<double>(i + 1);
  }
  if (combos <= static_cast<double>(cap)) {
    std::vector<std::size_t> pick(r);
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    for (;;) {
      std::vector<int> subset;
      for (std::size_t i : pick) subset.push_back(buses[i]);
      out.push_back(subset);
      // next combination
      std::size_t i = r;
      while (i > 0) {
        --i;
        if (pick[i] != i + n - r) {
          ++pick[i];
          for (std::size_t j = i + 1; j < r; ++j) pick[j] = pick[j - 1] + 1;
          break;
        }
        if (i == 0) return out;
      }
      if (r == 0) return out;
    }
  }
  std::set<std::vector<int>> seen;
  while (out.size() < cap) {
    std::vector<int> subset;
    std::vector<int> pool = buses;
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t j = rng.index_below(pool.size());
      subset.push_back(pool[j]);
      pool.erase(pool.begin() + static_cast<long>(j));
    }
    std::sort(subset.begin(), subset.end());
    if (seen.insert(subset).second) out.push_back(subset);
  }
  return out;
}

MetricSet average_metrics(const std::vector<MetricSet>& sets) {
  MetricSet avg;
  for (const MetricSet& m : sets) {
    avg.mape_pct += m.mape_pct;
    avg.mae_deg += m.mae_deg;
    avg.sigma_y2 += m.sigma_y2;
    avg.wall_ms_per_snapshot += m.wall_ms_per_snapshot;
  }
  const double n = static_cast<double>(sets.size());
  avg.mape_pct /= n;
  avg.mae_deg /= n;
  avg.sigma_y2 /= n;
  avg.wall_ms_per_snapshot /= n;
  return avg;
}

std::size_t parameter_count(const CgnnModel& model) {
  std::size_t n = 0;
  for (const gnn::ParamRef& p : model.parameters()) n += p.value->size();
  return n;
}

void require(bool cond, const char* what) {
  if (!cond) throw InputError(std::string("study: missing input: ") + what);
}

}  // namespace

std::string run_study(StudyKind kind, const StudyInputs& in) {
  json report;
  report["kind"] = study_kind_name(kind);
  report["seed"] = in.seed;
  json rows = json::array();
  const std::string dir = in.out_dir;

  switch (kind) {
    case StudyKind::kBaseline: {
      require(in.model && in.eval_data, "model + eval dataset");
      rows.push_back(row_json("model", evaluate_model(*in.model, *in.eval_data, {}, in.threads)));
      if (in.train_data) {
        rows.push_back(row_json("climatology",
                                climatology_metrics(*in.train_data, *in.eval_data)));
      }
      break;
    }
    case StudyKind::kTopology: {
      require(in.model && in.eval_data && in.grid, "model + eval dataset + grid");
      rows.push_back(row_json("base", evaluate_model(*in.model, *in.eval_data, {}, in.threads)));
      const auto ranked = rank_outages_by_flow(*in.grid, in.topology_outages);
      std::vector<grid::GridGraph> perturbed;
      perturbed.reserve(ranked.size());
      for (std::size_t k : ranked) perturbed.push_back(grid::perturb_topology(*in.grid, {k}));
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        EvalOverrides ov;
        ov.perturbed_grid = &perturbed[i];
        rows.push_back(row_json(outage_label(*in.grid, ranked[i]),
                                evaluate_model(*in.model, *in.eval_data, ov, in.threads)));
      }
      break;
    }
    case StudyKind::kPmuFailure: {
      require(in.model && in.eval_data, "model + eval dataset");
      Rng rng = Rng::stream(in.seed, 0xfa11);
      for (std::size_t r = 0; r <= in.eval_data->pmu_buses.size(); ++r) {
        const auto subsets = pmu_subsets(in.eval_data->pmu_buses, r, in.pmu_subset_cap, rng);
        std::vector<MetricSet> sets;
        for (const std::vector<int>& failed : subsets) {
          std::vector<bool> mask = in.eval_data->mask;
          for (int bus : failed) {
            for (std::size_t p = 0; p < in.eval_data->pmu_buses.size(); ++p) {
              if (in.eval_data->pmu_buses[p] == bus) mask[in.eval_data->pmu_index[p]] = false;
            }
          }
          EvalOverrides ov;
          ov.mask = &mask;
          sets.push_back(evaluate_model(*in.model, *in.eval_data, ov, in.threads));
        }
        json row = row_json("failures=" + std::to_string(r), average_metrics(sets));
        row["subsets"] = subsets.size();
        rows.push_back(row);
      }
      break;
    }
    case StudyKind::kCombined: {
      require(in.model && in.eval_data && in.grid, "model + eval dataset + grid");
      rows.push_back(row_json("base", evaluate_model(*in.model, *in.eval_data, {}, in.threads)));
      const auto ranked = rank_outages_by_flow(*in.grid, 2);
      for (std::size_t k : ranked) {
        const grid::GridGraph pert = grid::perturb_topology(*in.grid, {k});
        for (std::size_t p = 0; p < in.eval_data->pmu_buses.size(); ++p) {
          std::vector<bool> mask = in.eval_data->mask;
          mask[in.eval_data->pmu_index[p]] = false;
          EvalOverrides ov;
          ov.mask = &mask;
          ov.perturbed_grid = &pert;
          rows.push_back(row_json(
              outage_label(*in.grid, k) + " pmu " +
                  std::to_string(in.eval_data->pmu_buses[p]),
              evaluate_model(*in.model, *in.eval_data, ov, in.threads)));
        }
      }
      break;
    }
    case StudyKind::kNoise: {
      require(in.model && in.eval_data, "model + eval dataset");
      rows.push_back(
          row_json("gaussian", evaluate_model(*in.model, *in.eval_data, {}, in.threads)));
      if (in.alt_model && in.alt_eval_data) {
        rows.push_back(row_json(
            in.alt_label, evaluate_model(*in.alt_model, *in.alt_eval_data, {}, in.threads)));
      }
      break;
    }
    case StudyKind::kBadData: {
      require(in.model && in.eval_data && in.train_data,
              "model + eval dataset + train dataset");
      const bddc::ChannelStats stats = bddc::fit_stats(*in.train_data);
      std::vector<double> fractions = in.bad_data_fractions;
      std::vector<double> unscreened_mape, screened_mape;
      for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
        const double frac = fractions[fi];
        // corrupt a copy of the measurements, then evaluate with and
        // without the screen
        SnapshotDataset corrupted = *in.eval_data;
        Rng rng = Rng::stream(in.seed, 0xbadda7a00ULL + fi);
        for (datagen::Snapshot& s : corrupted.snapshots) {
          for (std::size_t p = 0; p < corrupted.pmu_buses.size(); ++p) {
            for (std::size_t ch = 0; ch < 2; ++ch) {
              if (rng.uniform() >= frac) continue;
              const double magnitude = rng.uniform(5.0, 20.0) * stats.stddev(p, ch);
              const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
              if (ch == 0) {
                s.vm_meas[p] += sign * magnitude;
              } else {
                s.va_meas[p] += sign * magnitude;
              }
            }
          }
        }
        const MetricSet raw = evaluate_model(*in.model, corrupted, {}, in.threads);
        EvalOverrides ov;
        ov.screen_stats = &stats;
        ov.alpha = in.alpha;
        const MetricSet screened = evaluate_model(*in.model, corrupted, ov, in.threads);
        json raw_row = row_json("unscreened f=" + std::to_string(frac), raw);
        json scr_row = row_json("screened f=" + std::to_string(frac), screened);
        raw_row["fraction"] = frac;
        scr_row["fraction"] = frac;
        rows.push_back(raw_row);
        rows.push_back(scr_row);
        unscreened_mape.push_back(raw.mape_pct);
        screened_mape.push_back(screened.mape_pct);
      }
      report["unscreened_mape_rank_correlation"] =
          spearman_rank_correlation(fractions, unscreened_mape);
      write_line_chart_svg(dir + "/bad_data.svg", "bad data injection", fractions,
                           {{"unscreened MAPE (%)", unscreened_mape},
                            {"screened MAPE (%)", screened_mape}},
                           "corrupted fraction", "magnitude MAPE (%)");
      break;
    }
    case StudyKind::kAttentionAblation: {
      require(in.grid && in.train_data && in.eval_data, "grid + train + eval datasets");
      for (const bool with_attention : {true, false}) {
        gnn::Architecture arch = in.arch;
        arch.use_gat = with_attention;
        CgnnModel model = train::init_model(*in.train_data, *in.grid, arch, in.seed);
        auto [trained, rep] = train::fit(std::move(model), *in.train_data, in.train_config);
        json row = row_json(with_attention ? "with-attention" : "gcn-substitute",
                            evaluate_model(trained, *in.eval_data, {}, in.threads));
        row["parameters"] = parameter_count(trained);
        row["best_val_loss"] = rep.best_val_loss;
        rows.push_back(row);
      }
      break;
    }
    case StudyKind::kHeadSweep: {
      require(in.grid && in.train_data && in.eval_data, "grid + train + eval datasets");
      for (std::size_t k : in.head_counts) {
        gnn::Architecture arch = in.arch;
        arch.heads = k;
        CgnnModel model = train::init_model(*in.train_data, *in.grid, arch, in.seed);
        auto [trained, rep] = train::fit(std::move(model), *in.train_data, in.train_config);
        json row = row_json("K=" + std::to_string(k),
                            evaluate_model(trained, *in.eval_data, {}, in.threads));
        row["best_val_loss"] = rep.best_val_loss;
        rows.push_back(row);
      }
      break;
    }
    case StudyKind::kPmuSetSweep: {
      require(in.grid && in.train_data && in.eval_data, "grid + train + eval datasets");
      if (in.pmu_sets.empty()) throw InputError("pmu_set_sweep: no PMU sets given");
      for (std::size_t s = 0; s < in.pmu_sets.size(); ++s) {
        const SnapshotDataset train_ds =
            dataset_with_pmus(*in.grid, *in.train_data, in.pmu_sets[s], in.seed + s);
        const SnapshotDataset eval_ds =
            dataset_with_pmus(*in.grid, *in.eval_data, in.pmu_sets[s], in.seed + 7777 + s);
        CgnnModel model = train::init_model(train_ds, *in.grid, in.arch, in.seed);
        auto [trained, rep] = train::fit(std::move(model), train_ds, in.train_config);
        std::string label = "pmus=";
        for (std::size_t i = 0; i < in.pmu_sets[s].size(); ++i) {
          if (i) label += "+";
          label += std::to_string(in.pmu_sets[s][i]);
        }
        json row = row_json(label, evaluate_model(trained, eval_ds, {}, in.threads));
        row["best_val_loss"] = rep.best_val_loss;
        rows.push_back(row);
      }
      break;
    }
  }

  report["rows"] = rows;
  write_rows_csv(dir + "/" + study_kind_name(kind) + ".csv", rows);
  write_rows_chart(dir + "/" + study_kind_name(kind) + ".svg",
                   study_kind_name(kind) + " study", rows);
  const std::string text = report.dump(2);
  std::ofstream out(dir + "/report.json");
  if (!out) throw InputError("cannot open for writing: " + dir + "/report.json");
  out << text << "\n";
  return text;
}

}  // namespace cgnnse::eval
