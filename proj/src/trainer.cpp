#include "cgnnse/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "cgnnse/errors.hpp"
#include "cgnnse/gmm.hpp"
#include "cgnnse/parallel.hpp"

namespace cgnnse::train {

using gnn::CgnnModel;
using nlohmann::json;
using numerics::Matrix;

std::string TrainReport::to_json() const {
  json j;
  j["stopped_epoch"] = stopped_epoch;
  j["best_epoch"] = best_epoch;
  j["best_val_loss"] = best_val_loss;
  j["initial_val_loss"] = initial_val_loss;
  json rows = json::array();
  for (const EpochRecord& e : epochs) {
    rows.push_back({{"train_loss", e.train_loss},
                    {"val_loss", e.val_loss},
                    {"seconds", e.seconds}});
  }
  j["epochs"] = rows;
  return j.dump(2);
}

void TrainReport::write_json(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << to_json() << "\n";
}

double mse_loss(const Matrix& prediction, const Matrix& target) {
  if (!prediction.same_shape(target)) {
    throw InputError("mse_loss: shapes " + numerics::shape_string(prediction) + " and " +
                     numerics::shape_string(target) + " differ");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = prediction.data()[i] - target.data()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(prediction.size());
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(
    std::size_t n, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw InputError("validation fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::stream(seed, 0x5b117);
  rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(std::round(val_fraction * static_cast<double>(n)));
  n_val = std::max<std::size_t>(1, std::min(n_val, n - 1));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<long>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

namespace {

void glorot_fill(Matrix& m, Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& x : m.data()) x = rng.uniform(-limit, limit);
}

}  // namespace

CgnnModel init_model(const datagen::SnapshotDataset& dataset, const grid::GridGraph& g,
                     const gnn::Architecture& arch, std::uint64_t seed) {
  if (dataset.size() == 0) throw InputError("init_model: dataset is empty");
  CgnnModel model =
      CgnnModel::make(arch, grid::build_adjacency(g), dataset.mask, dataset.grid_hash);

  // network weights
  Rng wrng = Rng::stream(seed, 0x11117);
  glorot_fill(model.w1, wrng, arch.input_features, arch.hidden);
  for (Matrix& w : model.mid_weights) glorot_fill(w, wrng, arch.hidden, arch.hidden);
  if (arch.use_gat) {
    for (gnn::GatHead& h : model.gat) {
      glorot_fill(h.w, wrng, arch.hidden, arch.hidden);
      glorot_fill(h.a_src, wrng, arch.hidden, 1);
      glorot_fill(h.a_dst, wrng, arch.hidden, 1);
    }
  } else {
    glorot_fill(model.sub_gcn_w, wrng, arch.hidden, arch.stage2_width());
  }
  glorot_fill(model.head_w, wrng, arch.stage2_width(), arch.outputs);

  // the initialization split matches fit()'s default so EM sees training data only
  const auto [train_idx, val_idx] = split_train_val(dataset.size(), 0.1, seed);
  (void)val_idx;
  const std::size_t n = dataset.n_buses;

  // head bias at the per-channel mean of the training targets
  double mean_vm = 0.0, mean_va = 0.0;
  for (std::size_t k : train_idx) {
    const datagen::Snapshot& s = dataset.snapshots[k];
    for (std::size_t i = 0; i < n; ++i) {
      mean_vm += s.vm_true[i];
      mean_va += s.va_true[i];
    }
  }
  const double denom = static_cast<double>(train_idx.size() * n);
  model.head_b(0, 0) = mean_vm / denom;
  model.head_b(0, 1) = mean_va / denom;

  // per-bus mixture priors from EM on the training-split true states; buses
  // observed during training keep these values frozen as their failure
  // fallback
  for (std::size_t i = 0; i < n; ++i) {
    Matrix samples(train_idx.size(), 2);
    for (std::size_t r = 0; r < train_idx.size(); ++r) {
      const datagen::Snapshot& s = dataset.snapshots[train_idx[r]];
      samples(r, 0) = s.vm_true[i];
      samples(r, 1) = s.va_true[i];
    }
    const datagen::GmmPrior prior =
        datagen::fit_gmm_em(samples, arch.components, splitmix64(seed) ^ i);
    for (std::size_t c = 0; c < arch.components; ++c) {
      model.gmm.logits(i, c) = std::log(std::max(prior.weights[c], 1e-9));
      model.gmm.means[c](i, 0) = prior.means(c, 0);
      model.gmm.means[c](i, 1) = prior.means(c, 1);
      model.gmm.log_vars[c](i, 0) = std::log(prior.vars(c, 0));
      model.gmm.log_vars[c](i, 1) = std::log(prior.vars(c, 1));
    }
  }
  return model;
}

double evaluate_loss(const CgnnModel& model, const datagen::SnapshotDataset& dataset,
                     const std::vector<std::size_t>& indices) {
  std::vector<double> losses(indices.size(), 0.0);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t k = indices[r];
    const Matrix pred = model.predict(dataset.feature_matrix(k), dataset.mask);
    losses[r] = mse_loss(pred, dataset.state_matrix(k));
  }
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(losses.size());
}

namespace {

struct AdamState {
  std::vector<Matrix> m, v;
  std::size_t t = 0;
};

// Per-snapshot gradient: d(SSE_k)/d(theta), written into `slot`.
double snapshot_gradient(const CgnnModel& model, const datagen::SnapshotDataset& dataset,
                         std::size_t snapshot, std::vector<Matrix>& slot) {
  numerics::Tape tape;
  const gnn::ParamNodes params = model.register_params(tape, true);
  const numerics::NodeId pred = model.build_forward(
      tape, params, model.adj, dataset.feature_matrix(snapshot), dataset.mask);
  const numerics::NodeId target = tape.input(dataset.state_matrix(snapshot));
  const numerics::NodeId diff = tape.sub(pred, target);
  const numerics::NodeId sse = tape.sum(tape.hadamard(diff, diff));
  tape.backward(sse);
  slot.clear();
  slot.reserve(params.nodes.size());
  for (numerics::NodeId id : params.nodes) slot.push_back(tape.adjoint(id));
  return tape.value(sse)(0, 0);
}

}  // namespace

std::pair<CgnnModel, TrainReport> fit(CgnnModel model,
                                      const datagen::SnapshotDataset& dataset,
                                      const TrainConfig& config) {
  if (config.batch_size < 1) throw InputError("fit: batch size must be >= 1");
  const auto [train_idx, val_idx] =
      split_train_val(dataset.size(), config.val_fraction, config.seed);
  if (train_idx.size() < config.batch_size) {
    throw InputError("fit: training split smaller than one batch");
  }

  auto params = model.parameters();
  const std::size_t n_params = params.size();

  AdamState adam;
  if (config.optimizer == TrainConfig::Optimizer::kAdam) {
    for (const gnn::ParamRef& p : params) {
      adam.m.emplace_back(p.value->rows(), p.value->cols());
      adam.v.emplace_back(p.value->rows(), p.value->cols());
    }
  }

  TrainReport report;
  report.initial_val_loss = evaluate_loss(model, dataset, val_idx);
  EarlyStopper stopper(config.patience, config.min_delta);
  // Seed with the untrained parameters so a run whose validation only ever
  // degrades restores them instead of a worse epoch.
  stopper.observe(report.initial_val_loss);

  std::vector<Matrix> best_params;
  std::size_t best_epoch = 0;  // 0 = initial parameters
  double best_val = report.initial_val_loss;
  auto snapshot_params = [&] {
    best_params.clear();
    for (const gnn::ParamRef& p : params) best_params.push_back(*p.value);
  };
  snapshot_params();

  const std::size_t n_out = dataset.n_buses * model.arch.outputs;
  std::vector<std::size_t> order = train_idx;
  std::vector<std::vector<Matrix>> grad_slots;
  std::vector<double> sse_slots;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng = Rng::stream(config.seed, 0xe90c000ULL + epoch);
    shuffle_rng.shuffle(order);

    double epoch_sse = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t bsz = std::min(config.batch_size, order.size() - start);
      grad_slots.resize(bsz);
      sse_slots.assign(bsz, 0.0);
      parallel_for(bsz, config.threads, [&](std::size_t b) {
        sse_slots[b] = snapshot_gradient(model, dataset, order[start + b], grad_slots[b]);
      });

      // reduce in snapshot order: identical result for any thread count
      const double scale = 1.0 / static_cast<double>(bsz * n_out);
      double batch_loss = 0.0;
      for (std::size_t b = 0; b < bsz; ++b) batch_loss += sse_slots[b];
      batch_loss *= scale;
      epoch_sse += batch_loss * static_cast<double>(bsz);
      if (!std::isfinite(batch_loss)) {
        throw NumericalError("fit: non-finite loss at epoch " + std::to_string(epoch));
      }

      if (config.optimizer == TrainConfig::Optimizer::kAdam) {
        ++adam.t;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
        for (std::size_t p = 0; p < n_params; ++p) {
          auto val = params[p].value->data();
          auto md = adam.m[p].data();
          auto vd = adam.v[p].data();
          for (std::size_t i = 0; i < val.size(); ++i) {
            double grad = 0.0;
            for (std::size_t b = 0; b < bsz; ++b) grad += grad_slots[b][p].data()[i];
            grad *= scale;
            md[i] = b1 * md[i] + (1.0 - b1) * grad;
            vd[i] = b2 * vd[i] + (1.0 - b2) * grad * grad;
            val[i] -= config.learning_rate * (md[i] / bc1) / (std::sqrt(vd[i] / bc2) + eps);
          }
        }
      } else {
        for (std::size_t p = 0; p < n_params; ++p) {
          auto val = params[p].value->data();
          for (std::size_t i = 0; i < val.size(); ++i) {
            double grad = 0.0;
            for (std::size_t b = 0; b < bsz; ++b) grad += grad_slots[b][p].data()[i];
            val[i] -= config.learning_rate * grad * scale;
          }
        }
      }
    }

    EpochRecord rec;
    rec.train_loss = epoch_sse / static_cast<double>(order.size());
    rec.val_loss = evaluate_loss(model, dataset, val_idx);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(rec);

    if (stopper.observe(rec.val_loss)) {
      best_epoch = epoch;
      best_val = rec.val_loss;
      snapshot_params();
    }
    if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() &&
        epoch % config.checkpoint_every == 0) {
      model.save(config.checkpoint_dir + "/epoch_" + std::to_string(epoch) + ".ckpt");
    }
    report.stopped_epoch = epoch;
    if (stopper.should_stop()) break;
  }

  // restore the best-validation parameters
  for (std::size_t p = 0; p < n_params; ++p) *params[p].value = best_params[p];
  report.best_epoch = best_epoch;
  report.best_val_loss = best_val;
  return {std::move(model), std::move(report)};
}

}  // namespace cgnnse::train
