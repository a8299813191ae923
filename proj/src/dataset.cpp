#include "cgnnse/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "cgnnse/errors.hpp"
#include "cgnnse/hash.hpp"
#include "cgnnse/parallel.hpp"

namespace cgnnse::datagen {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'G', 'N', 'S', 'E', 'D', 'S', '1'};
constexpr int kFormatVersion = 1;

json noise_to_json(const NoiseModel& m) {
  json j;
  if (m.kind == NoiseModel::Kind::kGaussianTve) {
    j["kind"] = "gaussian_tve";
    j["sigma_mag_frac"] = m.sigma_mag_frac;
    j["sigma_ang_rad"] = m.sigma_ang_rad;
  } else {
    j["kind"] = "gmm_tve";
    j["weights"] = m.weights;
    j["mean_mag_frac"] = m.mean_mag_frac;
    j["std_mag_frac"] = m.std_mag_frac;
    j["mean_ang_rad"] = m.mean_ang_rad;
    j["std_ang_rad"] = m.std_ang_rad;
  }
  return j;
}

NoiseModel noise_from_json(const json& j) {
  NoiseModel m;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "gaussian_tve") {
    m.kind = NoiseModel::Kind::kGaussianTve;
    m.sigma_mag_frac = j.at("sigma_mag_frac").get<double>();
    m.sigma_ang_rad = j.at("sigma_ang_rad").get<double>();
  } else if (kind == "gmm_tve") {
    m.kind = NoiseModel::Kind::kGmmTve;
    m.weights = j.at("weights").get<std::vector<double>>();
    m.mean_mag_frac = j.at("mean_mag_frac").get<std::vector<double>>();
    m.std_mag_frac = j.at("std_mag_frac").get<std::vector<double>>();
    m.mean_ang_rad = j.at("mean_ang_rad").get<std::vector<double>>();
    m.std_ang_rad = j.at("std_ang_rad").get<std::vector<double>>();
  } else {
    throw InputError("dataset: unknown noise kind '" + kind + "'");
  }
  m.validate();
  return m;
}

void write_block(std::ofstream& out, const std::vector<double>& values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::vector<double> read_block(std::ifstream& in, std::size_t count, const char* name) {
  std::vector<double> values(count);
  const auto offset = in.tellg();
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) {
    throw InputError("dataset: truncated while reading block '" + std::string(name) +
                     "' at byte offset " + std::to_string(static_cast<long long>(offset)));
  }
  return values;
}

}  // namespace

numerics::Matrix SnapshotDataset::feature_matrix(std::size_t snapshot) const {
  const Snapshot& s = snapshots.at(snapshot);
  numerics::Matrix x(n_buses, 2);
  for (std::size_t p = 0; p < pmu_index.size(); ++p) {
    x(pmu_index[p], 0) = s.vm_meas[p];
    x(pmu_index[p], 1) = s.va_meas[p];
  }
  return x;
}

numerics::Matrix SnapshotDataset::state_matrix(std::size_t snapshot) const {
  const Snapshot& s = snapshots.at(snapshot);
  numerics::Matrix y(n_buses, 2);
  for (std::size_t i = 0; i < n_buses; ++i) {
    y(i, 0) = s.vm_true[i];
    y(i, 1) = s.va_true[i];
  }
  return y;
}

std::map<int, std::vector<double>> synth_load_history(const grid::GridGraph& g,
                                                      double spread, std::size_t points,
                                                      std::uint64_t seed) {
  std::map<int, std::vector<double>> out;
  for (std::size_t i = 0; i < g.bus_count(); ++i) {
    const grid::Bus& b = g.buses[i];
    if (b.pd_mw == 0.0) continue;
    Rng rng = Rng::stream(seed, 0x10ad0000ULL + i);
    std::vector<double> hist(points);
    for (double& h : hist) h = b.pd_mw * (1.0 + rng.uniform(-spread, spread));
    out[b.id] = std::move(hist);
  }
  return out;
}

TrueStateCollection generate_snapshots(const grid::GridGraph& g,
                                       const std::map<int, LoadDistribution>& dists,
                                       std::size_t count, std::uint64_t seed,
                                       unsigned threads, const powerflow::SolveOptions& opt) {
  TrueStateCollection out;
  out.solutions.resize(count);
  out.pd_mw.resize(count);
  out.qd_mvar.resize(count);
  std::vector<std::size_t> retries(count, 0);

  const std::size_t n = g.bus_count();
  parallel_for(count, threads, [&](std::size_t k) {
    Rng rng = Rng::stream(seed, k);
    for (int attempt = 0;; ++attempt) {
      std::vector<double> pd(n), qd(n);
      for (std::size_t i = 0; i < n; ++i) {
        const grid::Bus& b = g.buses[i];
        pd[i] = b.pd_mw;
        qd[i] = b.qd_mvar;
        const auto it = dists.find(b.id);
        if (it != dists.end()) {
          pd[i] = it->second.sample(rng);
          // reactive load follows at the nominal power factor
          if (b.pd_mw != 0.0) qd[i] = pd[i] * (b.qd_mvar / b.pd_mw);
        }
      }
      try {
        out.solutions[k] = powerflow::solve_with_loads(g, pd, qd, opt);
        out.pd_mw[k] = std::move(pd);
        out.qd_mvar[k] = std::move(qd);
        retries[k] = static_cast<std::size_t>(attempt);
        return;
      } catch (const NumericalError&) {
        if (attempt >= 10) throw;
      }
    }
  });
  for (std::size_t r : retries) out.resample_count += r;
  return out;
}

void apply_noise(Snapshot& snap, const std::vector<std::size_t>& pmu_index,
                 const NoiseModel& model, Rng& rng) {
  model.validate();
  snap.vm_meas.resize(pmu_index.size());
  snap.va_meas.resize(pmu_index.size());
  for (std::size_t p = 0; p < pmu_index.size(); ++p) {
    model.apply(snap.vm_true[pmu_index[p]], snap.va_true[pmu_index[p]], rng,
                snap.vm_meas[p], snap.va_meas[p]);
  }
}

SnapshotDataset make_dataset(const grid::GridGraph& g, const TrueStateCollection& states,
                             const std::vector<int>& pmu_buses, const NoiseModel& noise,
                             std::uint64_t seed) {
  SnapshotDataset ds;
  ds.grid_hash = g.content_hash();
  ds.n_buses = g.bus_count();
  ds.pmu_buses = pmu_buses;
  std::sort(ds.pmu_buses.begin(), ds.pmu_buses.end());
  ds.pmu_buses.erase(std::unique(ds.pmu_buses.begin(), ds.pmu_buses.end()),
                     ds.pmu_buses.end());
  if (ds.pmu_buses.empty()) throw InputError("make_dataset: PMU set is empty");
  ds.mask.assign(ds.n_buses, false);
  for (int id : ds.pmu_buses) {
    const std::size_t idx = g.bus_index(id);
    ds.pmu_index.push_back(idx);
    ds.mask[idx] = true;
  }
  ds.noise = noise;
  ds.seed = seed;

  ds.snapshots.resize(states.solutions.size());
  for (std::size_t k = 0; k < states.solutions.size(); ++k) {
    Snapshot& s = ds.snapshots[k];
    s.vm_true = states.solutions[k].vm;
    s.va_true = states.solutions[k].va;
    s.pd_mw = states.pd_mw[k];
    s.qd_mvar = states.qd_mvar[k];
    Rng rng = Rng::stream(seed ^ 0x6e015eULL, k);
    apply_noise(s, ds.pmu_index, noise, rng);
  }
  return ds;
}

void write_dataset(const std::string& path, const SnapshotDataset& ds) {
  json header;
  header["format_version"] = kFormatVersion;
  header["grid_hash"] = hash_hex(ds.grid_hash);
  header["n_buses"] = ds.n_buses;
  header["n_snapshots"] = ds.snapshots.size();
  header["pmu_buses"] = ds.pmu_buses;
  header["pmu_index"] = ds.pmu_index;
  header["noise"] = noise_to_json(ds.noise);
  header["seed"] = ds.seed;
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));

  const std::size_t n = ds.n_buses, p = ds.pmu_buses.size();
  std::vector<double> block;
  auto flush_rows = [&](auto accessor, std::size_t width) {
    block.clear();
    block.reserve(ds.snapshots.size() * width);
    for (const Snapshot& s : ds.snapshots) {
      const std::vector<double>& row = accessor(s);
      block.insert(block.end(), row.begin(), row.end());
    }
    write_block(out, block);
  };
  flush_rows([](const Snapshot& s) -> const std::vector<double>& { return s.vm_true; }, n);
  flush_rows([](const Snapshot& s) -> const std::vector<double>& { return s.va_true; }, n);
  flush_rows([](const Snapshot& s) -> const std::vector<double>& { return s.pd_mw; }, n);
  flush_rows([](const Snapshot& s) -> const std::vector<double>& { return s.qd_mvar; }, n);
  flush_rows([](const Snapshot& s) -> const std::vector<double>& { return s.vm_meas; }, p);
  flush_rows([](const Snapshot& s) -> const std::vector<double>& { return s.va_meas; }, p);
  if (!out) throw InputError("dataset write failed: " + path);
}

SnapshotDataset read_dataset(const std::string& path, const grid::GridGraph* expected_grid) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open dataset: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw InputError("dataset: bad magic at byte offset 0 in " + path);
  }
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in) throw InputError("dataset: truncated header length at byte offset 8");
  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  if (!in) throw InputError("dataset: truncated header at byte offset 12");

  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception& e) {
    throw InputError(std::string("dataset: malformed header JSON: ") + e.what());
  }
  const int version = header.at("format_version").get<int>();
  if (version != kFormatVersion) {
    throw InputError("dataset: format version " + std::to_string(version) +
                     " not supported (expected " + std::to_string(kFormatVersion) + ")");
  }

  SnapshotDataset ds;
  const std::string stored_hash = header.at("grid_hash").get<std::string>();
  ds.n_buses = header.at("n_buses").get<std::size_t>();
  const std::size_t n_snapshots = header.at("n_snapshots").get<std::size_t>();
  ds.pmu_buses = header.at("pmu_buses").get<std::vector<int>>();
  ds.pmu_index = header.at("pmu_index").get<std::vector<std::size_t>>();
  ds.noise = noise_from_json(header.at("noise"));
  ds.seed = header.at("seed").get<std::uint64_t>();
  ds.mask.assign(ds.n_buses, false);
  for (std::size_t idx : ds.pmu_index) {
    if (idx >= ds.n_buses) throw InputError("dataset: PMU index out of range");
    ds.mask[idx] = true;
  }

  if (expected_grid) {
    const std::string expected = hash_hex(expected_grid->content_hash());
    if (expected != stored_hash) {
      throw InputError("dataset: grid hash mismatch (file " + stored_hash + ", grid " +
                       expected + ")");
    }
    for (std::size_t p = 0; p < ds.pmu_buses.size(); ++p) {
      if (expected_grid->bus_index(ds.pmu_buses[p]) != ds.pmu_index[p]) {
        throw InputError("dataset: PMU index table does not match grid");
      }
    }
  }
  ds.grid_hash = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    const char c = stored_hash.at(i);
    const int digit = c <= '9' ? c - '0' : c - 'a' + 10;
    ds.grid_hash = (ds.grid_hash << 4) | static_cast<std::uint64_t>(digit);
  }

  const std::size_t n = ds.n_buses, p = ds.pmu_buses.size();
  const auto vm_true = read_block(in, n_snapshots * n, "vm_true");
  const auto va_true = read_block(in, n_snapshots * n, "va_true");
  const auto pd = read_block(in, n_snapshots * n, "pd_mw");
  const auto qd = read_block(in, n_snapshots * n, "qd_mvar");
  const auto vm_meas = read_block(in, n_snapshots * p, "vm_meas");
  const auto va_meas = read_block(in, n_snapshots * p, "va_meas");

  ds.snapshots.resize(n_snapshots);
  for (std::size_t k = 0; k < n_snapshots; ++k) {
    Snapshot& s = ds.snapshots[k];
    s.vm_true.assign(vm_true.begin() + static_cast<long>(k * n),
                     vm_true.begin() + static_cast<long>((k + 1) * n));
    s.va_true.assign(va_true.begin() + static_cast<long>(k * n),
                     va_true.begin() + static_cast<long>((k + 1) * n));
    s.pd_mw.assign(pd.begin() + static_cast<long>(k * n),
                   pd.begin() + static_cast<long>((k + 1) * n));
    s.qd_mvar.assign(qd.begin() + static_cast<long>(k * n),
                     qd.begin() + static_cast<long>((k + 1) * n));
    s.vm_meas.assign(vm_meas.begin() + static_cast<long>(k * p),
                     vm_meas.begin() + static_cast<long>((k + 1) * p));
    s.va_meas.assign(va_meas.begin() + static_cast<long>(k * p),
                     va_meas.begin() + static_cast<long>((k + 1) * p));
  }
  return ds;
}

}  // namespace cgnnse::datagen
