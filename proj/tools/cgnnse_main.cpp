// cgnnse: command-line front end for the state-estimation toolkit.
//
// Subcommands: datagen, train, estimate, study, certify, inspect. Every run
// writes a manifest.json into its output directory recording the resolved
// configuration and content hashes of inputs and artifacts.
//
// Exit codes: 0 success, 2 input error, 3 numerical failure, 4 contract
// violation (e.g. a stability certificate whose measured distance exceeds
// its bound).

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cgnnse/dataset.hpp"
#include "cgnnse/errors.hpp"
#include "cgnnse/hash.hpp"
#include "cgnnse/manifest.hpp"
#include "cgnnse/metrics.hpp"
#include "cgnnse/model.hpp"
#include "cgnnse/parallel.hpp"
#include "cgnnse/stability.hpp"
#include "cgnnse/studies.hpp"
#include "cgnnse/trainer.hpp"
#include "cgnnse/wald.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cgnnse;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::string tok;
  std::istringstream in(text);
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<int> parse_pmu_spec(const std::string& spec, const grid::GridGraph& g) {
  if (spec == "highest-voltage") return grid::highest_voltage_buses(g);
  std::vector<int> out;
  for (const std::string& tok : split_csv(spec)) out.push_back(std::stoi(tok));
  if (out.empty()) throw InputError("empty PMU spec");
  return out;
}

std::vector<std::size_t> parse_outage_spec(const std::string& spec,
                                           const grid::GridGraph& g) {
  std::vector<std::size_t> out;
  for (const std::string& tok : split_csv(spec)) {
    const auto dash = tok.find('-');
    if (dash == std::string::npos) throw InputError("outage must be <from>-<to>: " + tok);
    const int f = std::stoi(tok.substr(0, dash));
    const int t = std::stoi(tok.substr(dash + 1));
    out.push_back(g.branch_index(f, t));
  }
  return out;
}

datagen::NoiseModel parse_noise(const std::string& kind, double tve) {
  if (kind == "gaussian") return datagen::NoiseModel::gaussian_tve(tve);
  if (kind == "gmm") return datagen::NoiseModel::gmm_tve_default();
  if (kind == "none") return datagen::NoiseModel::gaussian_sigmas(0.0, 0.0);
  throw InputError("unknown noise kind '" + kind + "' (gaussian|gmm|none)");
}

// Merges --config JSON values as defaults: command-line flags win because
// options use the take-last multi policy and config args are prepended.
std::vector<std::string> merge_config_args(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
      break;
    }
  }
  if (config_path.empty() || args.empty()) return args;

  std::ifstream in(config_path);
  if (!in) throw InputError("cannot open config file: " + config_path);
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed config JSON: ") + e.what());
  }
  std::vector<std::string> merged;
  merged.push_back(args[0]);  // subcommand first
  for (const auto& [key, value] : cfg.items()) {
    if (value.is_boolean()) {
      if (value.get<bool>()) merged.push_back("--" + key);
      continue;
    }
    merged.push_back("--" + key);
    merged.push_back(value.is_string() ? value.get<std::string>() : value.dump());
  }
  merged.insert(merged.end(), args.begin() + 1, args.end());
  return merged;
}

std::string args_json(const CLI::App* cmd) {
  json j;
  for (const CLI::Option* opt : cmd->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    if (opt->count() > 0 && !opt->results().empty()) {
      j[name] = opt->results().back();
    }
  }
  return j.dump();
}

grid::GridGraph load_case(const std::string& path) { return grid::load_case_file(path); }

struct DatagenArgs {
  std::string case_path, pmu = "highest-voltage", noise = "gaussian", out = "out";
  std::size_t count = 100, history_points = 200;
  double tve = 0.01, load_spread = 0.15;
  std::uint64_t seed = 1;
  int threads = 0;
};

int cmd_datagen(const DatagenArgs& a, const CLI::App* cmd) {
  const grid::GridGraph g = load_case(a.case_path);
  const std::vector<int> pmus = parse_pmu_spec(a.pmu, g);
  const datagen::NoiseModel noise = parse_noise(a.noise, a.tve);
  const unsigned threads = resolve_threads(a.threads);

  const auto history = datagen::synth_load_history(g, a.load_spread, a.history_points, a.seed);
  std::map<int, datagen::LoadDistribution> dists;
  for (const auto& [bus, series] : history) {
    dists[bus] = datagen::fit_load_kde(series, datagen::BandwidthRule::kSilverman);
  }
  const auto states = datagen::generate_snapshots(g, dists, a.count, a.seed, threads);
  // self-verification: every converged state must satisfy the power balance
  for (std::size_t k = 0; k < states.solutions.size(); ++k) {
    const double mismatch = powerflow::max_power_mismatch(
        g, states.solutions[k].vm, states.solutions[k].va, states.pd_mw[k],
        states.qd_mvar[k]);
    if (mismatch >= 1e-8) {
      throw NumericalError("snapshot " + std::to_string(k) + " residual " +
                           std::to_string(mismatch) + " p.u. exceeds 1e-8");
    }
  }
  const datagen::SnapshotDataset ds = datagen::make_dataset(g, states, pmus, noise, a.seed);

  fs::create_directories(a.out);
  const std::string ds_path = a.out + "/dataset.bin";
  datagen::write_dataset(ds_path, ds);

  cli::RunManifest manifest("datagen", args_json(cmd));
  manifest.add_seed("seed", a.seed);
  manifest.add_input("case", a.case_path);
  manifest.add_artifact("dataset", ds_path);
  manifest.write(a.out);
  std::cout << "wrote " << ds_path << " (" << ds.size() << " snapshots, "
            << ds.pmu_buses.size() << " PMU buses, " << states.resample_count
            << " resamples)\n";
  return 0;
}

struct TrainArgs {
  std::string case_path, data, out = "out", optimizer = "adam";
  std::size_t hidden = 50, heads = 4, mid_layers = 0, components = 3;
  bool no_gat = false;
  std::size_t epochs = 300, batch = 10, patience = 25, checkpoint_every = 0;
  double lr = 1e-3, min_delta = 0.0, val_fraction = 0.1;
  std::uint64_t seed = 1;
  int threads = 0;
};

int cmd_train(const TrainArgs& a, const CLI::App* cmd) {
  const grid::GridGraph g = load_case(a.case_path);
  const datagen::SnapshotDataset ds = datagen::read_dataset(a.data, &g);

  gnn::Architecture arch;
  arch.hidden = a.hidden;
  arch.heads = a.heads;
  arch.mid_gcn_layers = a.mid_layers;
  arch.components = a.components;
  arch.use_gat = !a.no_gat;

  train::TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.patience = a.patience;
  cfg.min_delta = a.min_delta;
  cfg.val_fraction = a.val_fraction;
  cfg.seed = a.seed;
  cfg.optimizer = a.optimizer == "sgd" ? train::TrainConfig::Optimizer::kSgd
                                       : train::TrainConfig::Optimizer::kAdam;
  cfg.threads = resolve_threads(a.threads);
  fs::create_directories(a.out);
  if (a.checkpoint_every > 0) {
    cfg.checkpoint_every = a.checkpoint_every;
    cfg.checkpoint_dir = a.out;
  }

  gnn::CgnnModel model = train::init_model(ds, g, arch, a.seed);
  auto [trained, report] = train::fit(std::move(model), ds, cfg);

  const std::string ckpt = a.out + "/model.ckpt";
  trained.save(ckpt);
  report.write_json(a.out + "/train_report.json");

  cli::RunManifest manifest("train", args_json(cmd));
  manifest.add_seed("seed", a.seed);
  manifest.add_input("case", a.case_path);
  manifest.add_input("dataset", a.data);
  manifest.add_artifact("checkpoint", ckpt);
  manifest.add_artifact("train_report", a.out + "/train_report.json");
  manifest.write(a.out);
  std::cout << "trained " << report.stopped_epoch << " epochs; best val loss "
            << report.best_val_loss << " at epoch " << report.best_epoch << "\n";
  return 0;
}

struct EstimateArgs {
  std::string case_path, checkpoint, measurements, out = "out", outage, train_data;
  double alpha = 0.01;
  bool no_screen = false;
  int threads = 0;
};

int cmd_estimate(const EstimateArgs& a, const CLI::App* cmd) {
  const grid::GridGraph g = load_case(a.case_path);
  const gnn::CgnnModel model = gnn::CgnnModel::load(a.checkpoint);
  if (model.grid_hash != g.content_hash()) {
    throw InputError("checkpoint was trained on a different grid (hash mismatch)");
  }

  std::optional<grid::AdjacencyPack> pack;
  if (!a.outage.empty()) {
    const grid::GridGraph pert = grid::perturb_topology(g, parse_outage_spec(a.outage, g));
    pack = grid::build_adjacency(pert);
  }

  std::optional<bddc::ChannelStats> stats;
  if (!a.no_screen) {
    if (a.train_data.empty()) {
      throw InputError("estimate: screening needs --train-data (or pass --no-screen)");
    }
    stats = bddc::fit_stats(datagen::read_dataset(a.train_data, &g));
  }

  // expected PMU set from the training mask
  std::vector<int> pmu_buses;
  std::vector<std::size_t> pmu_index;
  for (std::size_t i = 0; i < model.train_mask.size(); ++i) {
    if (model.train_mask[i]) {
      pmu_buses.push_back(g.buses[i].id);
      pmu_index.push_back(i);
    }
  }

  std::ifstream in(a.measurements);
  if (!in) throw InputError("cannot open measurements: " + a.measurements);
  fs::create_directories(a.out);
  const std::string out_path = a.out + "/states.jsonl";
  std::ofstream out(out_path);
  if (!out) throw InputError("cannot open for writing: " + out_path);

  std::string line;
  std::size_t snapshot = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw InputError("measurements line " + std::to_string(snapshot + 1) + ": " + e.what());
    }
    if (!row.is_array()) throw InputError("each measurement line must be a JSON array");
    numerics::Matrix z(pmu_buses.size(), 2);
    std::vector<bool> seen(pmu_buses.size(), false);
    for (const json& entry : row) {
      const int bus = entry.at("bus").get<int>();
      const auto it = std::find(pmu_buses.begin(), pmu_buses.end(), bus);
      if (it == pmu_buses.end()) {
        throw InputError("measurement at bus " + std::to_string(bus) +
                         " does not match the checkpoint PMU set");
      }
      const std::size_t slot = static_cast<std::size_t>(it - pmu_buses.begin());
      z(slot, 0) = entry.at("vm_pu").get<double>();
      z(slot, 1) = entry.at("va_deg").get<double>() * kPi / 180.0;
      seen[slot] = true;
    }
    for (std::size_t p = 0; p < seen.size(); ++p) {
      if (!seen[p]) {
        throw InputError("snapshot " + std::to_string(snapshot + 1) + " missing bus " +
                         std::to_string(pmu_buses[p]));
      }
    }

    const auto t0 = std::chrono::steady_clock::now();
    json screen_report;
    if (stats) {
      auto [corrected, rep] = bddc::screen(z, *stats, a.alpha);
      z = std::move(corrected);
      screen_report = json::parse(rep.to_json());
    }
    numerics::Matrix features(model.bus_count(), 2);
    for (std::size_t p = 0; p < pmu_index.size(); ++p) {
      features(pmu_index[p], 0) = z(p, 0);
      features(pmu_index[p], 1) = z(p, 1);
    }
    const numerics::Matrix y =
        model.predict(features, model.train_mask, pack ? &*pack : nullptr);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();

    json states = json::array();
    for (std::size_t i = 0; i < model.bus_count(); ++i) {
      states.push_back({{"bus", g.buses[i].id},
                        {"vm_pu", y(i, 0)},
                        {"va_deg", y(i, 1) * 180.0 / kPi}});
    }
    json out_row;
    out_row["snapshot"] = snapshot;
    out_row["wall_ms"] = ms;
    out_row["states"] = states;
    if (stats) out_row["screen"] = screen_report;
    out << out_row.dump() << "\n";
    ++snapshot;
  }

  cli::RunManifest manifest("estimate", args_json(cmd));
  manifest.add_input("case", a.case_path);
  manifest.add_input("checkpoint", a.checkpoint);
  manifest.add_input("measurements", a.measurements);
  manifest.add_artifact("states", out_path);
  manifest.write(a.out);
  std::cout << "estimated " << snapshot << " snapshots -> " << out_path << "\n";
  return 0;
}

struct StudyArgs {
  std::string kind, case_path, checkpoint, data, train_data, alt_checkpoint, alt_data;
  std::string out = "out", pmu_sets;  // semicolon-separated comma lists
  std::size_t outages = 5, cap = 64;
  double alpha = 0.01;
  std::uint64_t seed = 1;
  int threads = 0;
  // training-study knobs
  std::size_t hidden = 50, heads = 4, components = 3, epochs = 120, batch = 10,
              patience = 25;
  double lr = 1e-3;
};

int cmd_study(const StudyArgs& a, const CLI::App* cmd) {
  const eval::StudyKind kind = eval::parse_study_kind(a.kind);
  fs::create_directories(a.out);

  std::optional<grid::GridGraph> g;
  if (!a.case_path.empty()) g = load_case(a.case_path);
  std::optional<gnn::CgnnModel> model;
  if (!a.checkpoint.empty()) model = gnn::CgnnModel::load(a.checkpoint);
  std::optional<datagen::SnapshotDataset> eval_ds, train_ds, alt_ds;
  if (!a.data.empty()) eval_ds = datagen::read_dataset(a.data, g ? &*g : nullptr);
  if (!a.train_data.empty()) train_ds = datagen::read_dataset(a.train_data, g ? &*g : nullptr);
  if (!a.alt_data.empty()) alt_ds = datagen::read_dataset(a.alt_data, g ? &*g : nullptr);
  std::optional<gnn::CgnnModel> alt_model;
  if (!a.alt_checkpoint.empty()) alt_model = gnn::CgnnModel::load(a.alt_checkpoint);

  eval::StudyInputs in;
  in.grid = g ? &*g : nullptr;
  in.model = model ? &*model : nullptr;
  in.eval_data = eval_ds ? &*eval_ds : nullptr;
  in.train_data = train_ds ? &*train_ds : nullptr;
  in.alt_model = alt_model ? &*alt_model : nullptr;
  in.alt_eval_data = alt_ds ? &*alt_ds : nullptr;
  in.out_dir = a.out;
  in.seed = a.seed;
  in.threads = resolve_threads(a.threads);
  in.topology_outages = a.outages;
  in.pmu_subset_cap = a.cap;
  in.alpha = a.alpha;
  in.arch.hidden = a.hidden;
  in.arch.heads = a.heads;
  in.arch.components = a.components;
  in.train_config.epochs = a.epochs;
  in.train_config.batch_size = a.batch;
  in.train_config.learning_rate = a.lr;
  in.train_config.patience = a.patience;
  in.train_config.seed = a.seed;
  in.train_config.threads = in.threads;
  for (const std::string& set : split_csv(a.pmu_sets)) {
    std::vector<int> buses;
    std::istringstream ss(set);
    std::string tok;
    while (std::getline(ss, tok, '+')) buses.push_back(std::stoi(tok));
    in.pmu_sets.push_back(buses);
  }

  eval::run_study(kind, in);

  cli::RunManifest manifest("study " + a.kind, args_json(cmd));
  manifest.add_seed("seed", a.seed);
  if (!a.case_path.empty()) manifest.add_input("case", a.case_path);
  if (!a.checkpoint.empty()) manifest.add_input("checkpoint", a.checkpoint);
  if (!a.data.empty()) manifest.add_input("eval_data", a.data);
  if (!a.train_data.empty()) manifest.add_input("train_data", a.train_data);
  manifest.add_artifact("report", a.out + "/report.json");
  manifest.write(a.out);
  std::cout << "study '" << a.kind << "' written to " << a.out << "\n";
  return 0;
}

struct CertifyArgs {
  std::string case_path, checkpoint, data, out = "out";
  std::size_t k = 1, samples = 50, snapshot = 0;
  std::uint64_t seed = 1;
  int threads = 0;
};

int cmd_certify(const CertifyArgs& a, const CLI::App* cmd) {
  const grid::GridGraph g = load_case(a.case_path);
  const gnn::CgnnModel model = gnn::CgnnModel::load(a.checkpoint);
  const datagen::SnapshotDataset ds = datagen::read_dataset(a.data, &g);

  const auto results = stability::sweep_contingencies(
      model, g, ds, a.snapshot, a.k, a.samples, a.seed, resolve_threads(a.threads));

  fs::create_directories(a.out);
  stability::write_certificates_csv(a.out + "/certificates.csv", results);
  stability::write_certificates_json(a.out + "/certificates.json", results);

  std::size_t violations = 0, evaluated = 0;
  for (const auto& r : results) {
    if (!r.evaluated) continue;
    ++evaluated;
    if (r.cert.violated()) ++violations;
  }
  cli::RunManifest manifest("certify", args_json(cmd));
  manifest.add_seed("seed", a.seed);
  manifest.add_input("case", a.case_path);
  manifest.add_input("checkpoint", a.checkpoint);
  manifest.add_input("dataset", a.data);
  manifest.add_artifact("certificates_csv", a.out + "/certificates.csv");
  manifest.add_artifact("certificates_json", a.out + "/certificates.json");
  manifest.write(a.out);

  std::cout << evaluated << " contingencies evaluated, " << violations << " violations\n";
  if (violations > 0) {
    throw ContractViolation(std::to_string(violations) +
                            " stability certificate(s) violated (measured > bound); see " +
                            a.out + "/certificates.csv");
  }
  return 0;
}

int cmd_inspect(const std::string& path) {
  if (fs::is_directory(path) || path.ends_with("manifest.json")) {
    const std::string mpath =
        fs::is_directory(path) ? path + "/manifest.json" : path;
    const auto mismatches = cli::RunManifest::verify(mpath);
    std::ifstream in(mpath);
    std::cout << in.rdbuf();
    if (!mismatches.empty()) {
      std::string msg = "manifest hash verification failed:";
      for (const std::string& m : mismatches) msg += "\n  " + m;
      throw ContractViolation(msg);
    }
    std::cout << "manifest hashes verify\n";
    return 0;
  }
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw InputError("cannot open: " + path);
  char magic[8] = {};
  probe.read(magic, sizeof(magic));
  const std::string m(magic, magic + 8);
  if (m == "CGNSEDS1") {
    const datagen::SnapshotDataset ds = datagen::read_dataset(path);
    std::cout << "dataset: " << ds.size() << " snapshots, " << ds.n_buses << " buses, PMUs at";
    for (int b : ds.pmu_buses) std::cout << " " << b;
    std::cout << "\nnoise: " << ds.noise.describe() << "\nseed: " << ds.seed
              << "\ngrid hash: " << hash_hex(ds.grid_hash) << "\n";
    return 0;
  }
  if (m == "CGNSEMD1") {
    const gnn::CgnnModel model = gnn::CgnnModel::load(path);
    std::size_t params = 0;
    for (const auto& p : model.parameters()) params += p.value->size();
    std::cout << "checkpoint: " << model.bus_count() << " buses, hidden " << model.arch.hidden
              << ", heads " << model.arch.heads << ", components " << model.arch.components
              << (model.arch.use_gat ? "" : ", attention stage replaced by GCN") << "\n"
              << params << " parameters, grid hash " << hash_hex(model.grid_hash) << "\n";
    return 0;
  }
  // fall back to the case parser (its diagnostics carry line numbers)
  const grid::GridGraph g = load_case(path);
  std::size_t in_service = 0;
  for (const auto& br : g.branches) in_service += br.in_service ? 1 : 0;
  std::cout << "case " << g.name << ": " << g.bus_count() << " buses, " << g.branches.size()
            << " branches (" << in_service << " in service), " << g.gens.size()
            << " generators, slack bus " << g.slack_bus << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-network state estimation toolkit"};
  app.require_subcommand(1);

  DatagenArgs dg;
  CLI::App* datagen_cmd = app.add_subcommand("datagen", "generate a snapshot dataset");
  datagen_cmd->add_option("--case", dg.case_path, "case file")->required();
  datagen_cmd->add_option("--pmu", dg.pmu, "bus list (1,2,6) or 'highest-voltage'");
  datagen_cmd->add_option("--count", dg.count, "snapshot count");
  datagen_cmd->add_option("--noise", dg.noise, "gaussian|gmm|none");
  datagen_cmd->add_option("--tve", dg.tve, "TVE budget for gaussian noise");
  datagen_cmd->add_option("--load-spread", dg.load_spread, "synthetic history spread");
  datagen_cmd->add_option("--history-points", dg.history_points, "history length per load");
  datagen_cmd->add_option("--seed", dg.seed, "RNG seed");
  datagen_cmd->add_option("--out", dg.out, "output directory");
  datagen_cmd->add_option("--threads", dg.threads, "worker threads (0 = auto)");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train an estimator");
  train_cmd->add_option("--case", tr.case_path, "case file")->required();
  train_cmd->add_option("--data", tr.data, "training dataset")->required();
  train_cmd->add_option("--out", tr.out, "output directory");
  train_cmd->add_option("--hidden", tr.hidden, "hidden features per layer");
  train_cmd->add_option("--heads", tr.heads, "attention heads");
  train_cmd->add_option("--mid-layers", tr.mid_layers, "extra GCN layers");
  train_cmd->add_option("--components", tr.components, "mixture components");
  train_cmd->add_flag("--no-gat", tr.no_gat, "replace attention stage by equal-width GCN");
  train_cmd->add_option("--epochs", tr.epochs, "max epochs");
  train_cmd->add_option("--batch", tr.batch, "batch size");
  train_cmd->add_option("--lr", tr.lr, "learning rate");
  train_cmd->add_option("--patience", tr.patience, "early-stop patience");
  train_cmd->add_option("--min-delta", tr.min_delta, "early-stop min improvement");
  train_cmd->add_option("--val-fraction", tr.val_fraction, "validation fraction");
  train_cmd->add_option("--optimizer", tr.optimizer, "adam|sgd");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "periodic checkpoints");
  train_cmd->add_option("--seed", tr.seed, "RNG seed");
  train_cmd->add_option("--threads", tr.threads, "worker threads (0 = auto)");

  EstimateArgs es;
  CLI::App* estimate_cmd = app.add_subcommand("estimate", "estimate states from measurements");
  estimate_cmd->add_option("--case", es.case_path, "case file")->required();
  estimate_cmd->add_option("--checkpoint", es.checkpoint, "model checkpoint")->required();
  estimate_cmd->add_option("--measurements", es.measurements, "JSON-lines measurements")
      ->required();
  estimate_cmd->add_option("--alpha", es.alpha, "screen false-positive rate");
  estimate_cmd->add_option("--outage", es.outage, "branch outages, e.g. 8-5,30-17");
  estimate_cmd->add_option("--train-data", es.train_data, "dataset for screen statistics");
  estimate_cmd->add_flag("--no-screen", es.no_screen, "skip the bad-data screen");
  estimate_cmd->add_option("--out", es.out, "output directory");
  estimate_cmd->add_option("--threads", es.threads, "worker threads (0 = auto)");

  StudyArgs st;
  CLI::App* study_cmd = app.add_subcommand("study", "run an experiment study");
  study_cmd->add_option("kind", st.kind, "study kind")->required();
  study_cmd->add_option("--case", st.case_path, "case file");
  study_cmd->add_option("--checkpoint", st.checkpoint, "model checkpoint");
  study_cmd->add_option("--data", st.data, "evaluation dataset");
  study_cmd->add_option("--train-data", st.train_data, "training dataset");
  study_cmd->add_option("--alt-checkpoint", st.alt_checkpoint, "second checkpoint (noise)");
  study_cmd->add_option("--alt-data", st.alt_data, "second eval dataset (noise)");
  study_cmd->add_option("--out", st.out, "output directory");
  study_cmd->add_option("--outages", st.outages, "single-line outages to test");
  study_cmd->add_option("--cap", st.cap, "PMU-failure subset cap");
  study_cmd->add_option("--alpha", st.alpha, "screen false-positive rate");
  study_cmd->add_option("--pmu-sets", st.pmu_sets, "sets like 1+2+6,2+6+9");
  study_cmd->add_option("--hidden", st.hidden, "hidden features (training studies)");
  study_cmd->add_option("--heads", st.heads, "attention heads (training studies)");
  study_cmd->add_option("--components", st.components, "mixture components");
  study_cmd->add_option("--epochs", st.epochs, "epochs (training studies)");
  study_cmd->add_option("--batch", st.batch, "batch size (training studies)");
  study_cmd->add_option("--lr", st.lr, "learning rate (training studies)");
  study_cmd->add_option("--patience", st.patience, "early-stop patience");
  study_cmd->add_option("--seed", st.seed, "RNG seed");
  study_cmd->add_option("--threads", st.threads, "worker threads (0 = auto)");

  CertifyArgs ce;
  CLI::App* certify_cmd = app.add_subcommand("certify", "stability certificates for outages");
  certify_cmd->add_option("--case", ce.case_path, "case file")->required();
  certify_cmd->add_option("--checkpoint", ce.checkpoint, "model checkpoint")->required();
  certify_cmd->add_option("--data", ce.data, "dataset providing the load draw")->required();
  certify_cmd->add_option("--k", ce.k, "contingency depth");
  certify_cmd->add_option("--samples", ce.samples, "random sets for k >= 2");
  certify_cmd->add_option("--snapshot", ce.snapshot, "snapshot index");
  certify_cmd->add_option("--seed", ce.seed, "RNG seed");
  certify_cmd->add_option("--out", ce.out, "output directory");
  certify_cmd->add_option("--threads", ce.threads, "worker threads (0 = auto)");

  std::string inspect_path;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "describe a file and verify hashes");
  inspect_cmd->add_option("path", inspect_path, "case/dataset/checkpoint/manifest")->required();

  // options use take-last so config-file values can be overridden by flags
  for (CLI::App* sub : app.get_subcommands({})) {
    for (CLI::Option* opt : sub->get_options()) {
      if (opt->get_expected_min() > 0) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }

  try {
    const std::vector<std::string> args = merge_config_args(argc, argv);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);

    if (datagen_cmd->parsed()) return cmd_datagen(dg, datagen_cmd);
    if (train_cmd->parsed()) return cmd_train(tr, train_cmd);
    if (estimate_cmd->parsed()) return cmd_estimate(es, estimate_cmd);
    if (study_cmd->parsed()) return cmd_study(st, study_cmd);
    if (certify_cmd->parsed()) return cmd_certify(ce, certify_cmd);
    if (inspect_cmd->parsed()) return cmd_inspect(inspect_path);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
