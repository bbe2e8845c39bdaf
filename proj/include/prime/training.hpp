#pragma once

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "prime/baselines.hpp"
#include "prime/dataset.hpp"
#include "prime/moe.hpp"
#include "prime/train_config.hpp"

namespace prime {

enum class ModelKind { Prime, Ppc, Mnn, Mlp };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Prime: return "prime";
    case ModelKind::Ppc: return "ppc";
    case ModelKind::Mnn: return "mnn";
    case ModelKind::Mlp: return "mlp";
  }
  throw std::logic_error("unknown model kind");
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "prime") return ModelKind::Prime;
  if (s == "ppc") return ModelKind::Ppc;
  if (s == "mnn") return ModelKind::Mnn;
  if (s == "mlp") return ModelKind::Mlp;
  throw std::invalid_argument("unknown model kind: " + s);
}

struct PlainNet {
  MlpSpec net;
  NormBounds bounds;
  OutputTransform out;
};

struct TrainedModel {
  ModelKind kind = ModelKind::Mlp;
  std::optional<PrimeModel> prime;
  std::optional<PpcNet> ppc;
  std::optional<PlainNet> plain;

  int input_dim() const {
    switch (kind) {
      case ModelKind::Prime: return prime->input_dim();
      case ModelKind::Ppc: return ppc->input_dim();
      default: return plain->net.input_dim();
    }
  }
  const NormBounds& bounds() const {
    switch (kind) {
      case ModelKind::Prime: return prime->bounds;
      case ModelKind::Ppc: return ppc->bounds;
      default: return plain->bounds;
    }
  }
};

inline Prediction model_predict(const TrainedModel& m, const Eigen::VectorXd& x_raw) {
  switch (m.kind) {
    case ModelKind::Prime: return prime_predict(*m.prime, x_raw);
    case ModelKind::Ppc: return ppc_predict(*m.ppc, x_raw);
    default: return mlp_predict(m.plain->net, m.plain->bounds, x_raw, m.plain->out);
  }
}

// Batched log-current prediction over pre-normalized rows (all vds > 0; the
// zero rule never applies on regression data).
inline Eigen::VectorXd model_predict_batch(const TrainedModel& m, const Eigen::MatrixXd& Xn) {
  switch (m.kind) {
    case ModelKind::Prime: {
      PrimeBatchCache cache;
      return prime_forward_batch(*m.prime, Xn, cache);
    }
    case ModelKind::Ppc: {
      const Eigen::MatrixXd logits = forward_batch(m.ppc->classifier, Xn);
      Eigen::MatrixXd regional(Xn.rows(), kExpertCount);
      for (int j = 0; j < kExpertCount; ++j) {
        regional.col(j) = forward_batch(m.ppc->regional[static_cast<size_t>(j)], Xn);
      }
      Eigen::VectorXd out(Xn.rows());
      for (Eigen::Index i = 0; i < Xn.rows(); ++i) {
        out[i] = m.ppc->out.apply(regional(i, ppc_route(logits.row(i).transpose())));
      }
      return out;
    }
    default: return (forward_batch(m.plain->net, Xn).array() * m.plain->out.scale + m.plain->out.offset).matrix();
  }
}

namespace detail {

using RowGrid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using GridMapConst = Eigen::Map<const RowGrid>;
using GridMap = Eigen::Map<RowGrid>;

// Deterministic device batching: one fixed shuffle, then consecutive chunks
// cycling over the epoch.
struct DeviceBatcher {
  std::vector<int> order;
  int chunk;
  long cursor = 0;

  DeviceBatcher(int device_count, int batch_devices, uint64_t seed) {
    order.resize(static_cast<size_t>(device_count));
    for (int i = 0; i < device_count; ++i) order[static_cast<size_t>(i)] = i;
    chunk = batch_devices <= 0 || batch_devices >= device_count ? device_count : batch_devices;
    if (chunk < device_count) {
      Rng rng(derive_seed(seed, "device-batch"));
      rng.shuffle(order);
    }
  }

  bool full_batch() const { return chunk == static_cast<int>(order.size()); }

  std::vector<int> next() {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(chunk));
    for (int i = 0; i < chunk; ++i) {
      out.push_back(order[static_cast<size_t>(cursor % order.size())]);
      ++cursor;
    }
    return out;
  }
};

// Shared Eq.-5 training loop over per-device bias grids. The model is
// abstracted by two closures: forward rows -> predictions, and backward
// from d(loss)/d(prediction) followed by the optimizer update. An optional
// per-sample mask restricts the loss to a region subset (PPC regionals).
struct GridRegressionDriver {
  const GridBatch& batch;
  const LossConfig& loss;
  const std::vector<GridMask>* masks = nullptr;  // per device, or null

  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> forward_rows;
  std::function<void(const Eigen::MatrixXd& rows, const Eigen::VectorXd& dyhat)> backward_and_update;

  TrainReport run(const TrainConfig& cfg, const char* what) {
    const auto t0 = std::chrono::steady_clock::now();
    const long per_dev = batch.samples_per_device();
    DeviceBatcher batcher(batch.device_count, cfg.batch_devices, cfg.seed);
    TrainReport report;
    report.loss = cfg.loss;
    report.loss_history.reserve(static_cast<size_t>(cfg.steps));
    Eigen::MatrixXd rows;
    Eigen::VectorXd targets;
    for (long step = 0; step < cfg.steps; ++step) {
      const std::vector<int> devs = batcher.next();
      const Eigen::MatrixXd* X = &batch.X;
      const Eigen::VectorXd* y = &batch.y;
      if (!batcher.full_batch()) {
        rows.resize(static_cast<long>(devs.size()) * per_dev, batch.X.cols());
        targets.resize(rows.rows());
        for (size_t k = 0; k < devs.size(); ++k) {
          rows.middleRows(static_cast<long>(k) * per_dev, per_dev) = batch.X.middleRows(devs[k] * per_dev, per_dev);
          targets.segment(static_cast<long>(k) * per_dev, per_dev) = batch.y.segment(devs[k] * per_dev, per_dev);
        }
        X = &rows;
        y = &targets;
      }
      Eigen::VectorXd yhat = forward_rows(*X);
      // count masked samples in this step's batch
      long n_masked = 0;
      if (masks) {
        for (size_t k = 0; k < devs.size(); ++k) {
          for (uint8_t v : (*masks)[static_cast<size_t>(devs[k])]) n_masked += v;
        }
      } else {
        n_masked = static_cast<long>(devs.size()) * per_dev;
      }
      if (n_masked == 0) {
        report.loss_history.push_back(0.0);
        continue;
      }
      const double inv_n = 1.0 / static_cast<double>(n_masked);
      Eigen::VectorXd dyhat = Eigen::VectorXd::Zero(yhat.size());
      GridLossTerms agg;
      for (size_t k = 0; k < devs.size(); ++k) {
        const long off = static_cast<long>(k) * per_dev;
        GridMapConst pred(yhat.data() + off, batch.rows, batch.cols);
        GridMapConst targ(y->data() + off, batch.rows, batch.cols);
        const GridMask* mask = masks ? &(*masks)[static_cast<size_t>(devs[k])] : nullptr;
        const GridLossTerms t = grid_loss_terms(pred, targ, kBiasStep, kBiasStep, mask);
        agg.value += t.value;
        for (int m = 0; m < 2; ++m) {
          agg.dvds[m] += t.dvds[m];
          agg.dvgs[m] += t.dvgs[m];
        }
        agg.count += t.count;
        GridMap dmap(dyhat.data() + off, batch.rows, batch.cols);
        loss_backward_accum(pred, targ, loss, inv_n, dmap, kBiasStep, kBiasStep, mask);
      }
      const double step_loss = agg.weighted_sum(loss) * inv_n;
      if (!std::isfinite(step_loss)) {
        throw std::runtime_error(std::string(what) + ": training diverged at step " + std::to_string(step));
      }
      report.loss_history.push_back(step_loss);
      report.final_terms = agg;
      backward_and_update(*X, dyhat);
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
  }
};

}  // namespace detail

// Cross-entropy training of the three-way region classifier on normalized
// features. Returns per-step mean CE in the report history.
inline TrainReport train_classifier(MlpSpec& classifier, const GridBatch& batch, const TrainConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const long per_dev = batch.samples_per_device();
  detail::DeviceBatcher batcher(batch.device_count, cfg.batch_devices, cfg.seed);
  AdamState adam = make_adam_state(classifier, cfg.lr);
  TrainReport report;
  report.loss_history.reserve(static_cast<size_t>(cfg.steps));
  // class presence check; a missing class is a warning-level condition the
  // caller may surface, training proceeds either way
  for (long step = 0; step < cfg.steps; ++step) {
    const std::vector<int> devs = batcher.next();
    Eigen::MatrixXd rows;
    const Eigen::MatrixXd* X = &batch.X;
    std::vector<long> offsets;
    if (!batcher.full_batch()) {
      rows.resize(static_cast<long>(devs.size()) * per_dev, batch.X.cols());
      for (size_t k = 0; k < devs.size(); ++k) {
        rows.middleRows(static_cast<long>(k) * per_dev, per_dev) = batch.X.middleRows(devs[k] * per_dev, per_dev);
      }
      X = &rows;
    }
    BatchCache cache;
    const Eigen::MatrixXd logits = forward_batch(classifier, *X, &cache);
    const long n = logits.rows();
    Eigen::MatrixXd p(n, kExpertCount);
    double ce = 0.0;
    Eigen::MatrixXd dlogits(n, kExpertCount);
    for (long i = 0; i < n; ++i) {
      Eigen::Vector3d row = logits.row(i).transpose();
      Eigen::Vector3d e = (row.array() - row.maxCoeff()).exp();
      const Eigen::Vector3d pi = e / e.sum();
      const long dev_local = i / per_dev;
      const long global = static_cast<long>(devs[static_cast<size_t>(dev_local)]) * per_dev + i % per_dev;
      const int label = static_cast<int>(batch.region[static_cast<size_t>(global)]);
      ce -= std::log(std::max(pi[label], 1e-300));
      dlogits.row(i) = pi.transpose();
      dlogits(i, label) -= 1.0;
    }
    ce /= static_cast<double>(n);
    if (!std::isfinite(ce)) throw std::runtime_error("classifier: training diverged at step " + std::to_string(step));
    dlogits /= static_cast<double>(n);
    report.loss_history.push_back(ce);
    Gradients g = make_zero_gradients(classifier);
    backward_batch(classifier, cache, dlogits, g);
    adam_step(classifier, adam, g, "classifier");
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// Region masks per device grid, derived from the ground-truth labels.
inline std::vector<GridMask> region_masks(const GridBatch& batch, Region region) {
  std::vector<GridMask> masks(static_cast<size_t>(batch.device_count));
  const long per_dev = batch.samples_per_device();
  for (int d = 0; d < batch.device_count; ++d) {
    GridMask& m = masks[static_cast<size_t>(d)];
    m.resize(static_cast<size_t>(per_dev));
    for (long s = 0; s < per_dev; ++s) {
      m[static_cast<size_t>(s)] = batch.region[static_cast<size_t>(d * per_dev + s)] == region ? 1 : 0;
    }
  }
  return masks;
}

// Eq.-5 regression of one regional net on its region subset. The net is
// evaluated on whole device grids so the derivative stencils stay defined;
// only in-region samples contribute loss terms.
inline TrainReport train_regional(MlpSpec& net, const OutputTransform& out, const GridBatch& batch, Region region,
                                  const TrainConfig& cfg) {
  cfg.validate();
  const std::vector<GridMask> masks = region_masks(batch, region);
  long total = 0;
  for (const GridMask& m : masks)
    for (uint8_t v : m) total += v;
  if (total == 0) {
    throw std::runtime_error(std::string("train_regional: no training samples labeled ") + to_string(region));
  }
  AdamState adam = make_adam_state(net, cfg.lr);
  detail::GridRegressionDriver driver{batch, cfg.loss, &masks, nullptr, nullptr};
  BatchCache cache;
  driver.forward_rows = [&](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return (forward_batch(net, X, &cache).array() * out.scale + out.offset).matrix();
  };
  driver.backward_and_update = [&](const Eigen::MatrixXd&, const Eigen::VectorXd& dyhat) {
    Gradients g = make_zero_gradients(net);
    backward_batch(net, cache, dyhat * out.scale, g);
    adam_step(net, adam, g, "regional");
  };
  return driver.run(cfg, "train_regional");
}

namespace detail {

inline TrainReport train_plain(MlpSpec& net, const OutputTransform& out, const GridBatch& batch,
                               const TrainConfig& cfg, const char* what) {
  AdamState adam = make_adam_state(net, cfg.lr);
  GridRegressionDriver driver{batch, cfg.loss, nullptr, nullptr, nullptr};
  BatchCache cache;
  driver.forward_rows = [&](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return (forward_batch(net, X, &cache).array() * out.scale + out.offset).matrix();
  };
  driver.backward_and_update = [&](const Eigen::MatrixXd&, const Eigen::VectorXd& dyhat) {
    Gradients g = make_zero_gradients(net);
    backward_batch(net, cache, dyhat * out.scale, g);
    adam_step(net, adam, g, what);
  };
  return driver.run(cfg, what);
}

inline TrainReport train_prime(PrimeModel& model, const GridBatch& batch, const TrainConfig& cfg) {
  std::array<AdamState, kExpertCount> expert_adam;
  for (int j = 0; j < kExpertCount; ++j) expert_adam[static_cast<size_t>(j)] = make_adam_state(model.experts[static_cast<size_t>(j)], cfg.lr);
  AdamState gate_adam = make_adam_state(model.gate, cfg.lr);
  GridRegressionDriver driver{batch, cfg.loss, nullptr, nullptr, nullptr};
  PrimeBatchCache cache;
  driver.forward_rows = [&](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return prime_forward_batch(model, X, cache);
  };
  driver.backward_and_update = [&](const Eigen::MatrixXd&, const Eigen::VectorXd& dyhat) {
    PrimeGradients g = make_zero_prime_gradients(model);
    prime_backward_batch(model, cache, dyhat, g);
    for (int j = 0; j < kExpertCount; ++j) {
      adam_step(model.experts[static_cast<size_t>(j)], expert_adam[static_cast<size_t>(j)], g.experts[static_cast<size_t>(j)],
                "expert" + std::to_string(j));
    }
    adam_step(model.gate, gate_adam, g.gate, "gate");
  };
  return driver.run(cfg, "train_prime");
}

}  // namespace detail

// Classifier routing accuracy against ground-truth region labels.
inline double classifier_accuracy(const MlpSpec& classifier, const GridBatch& batch) {
  const Eigen::MatrixXd logits = forward_batch(classifier, batch.X);
  long hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (ppc_route(logits.row(i).transpose()) == static_cast<int>(batch.region[static_cast<size_t>(i)])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

// Deterministic end-to-end training for every model kind.
inline std::pair<TrainedModel, TrainReport> train(ModelKind kind, const DatasetSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) throw std::invalid_argument("train: empty training split");
  const GridBatch batch = make_batch(split.train, split.bounds);
  const int input_dim = static_cast<int>(split.bounds.size());
  const OutputTransform y_transform = fit_output_transform(batch.y);
  TrainedModel out;
  out.kind = kind;
  switch (kind) {
    case ModelKind::Prime: {
      PrimeModel model = init_prime(input_dim, split.bounds, cfg.seed);
      model.out = y_transform;
      TrainReport report = detail::train_prime(model, batch, cfg);
      out.prime = std::move(model);
      return {std::move(out), std::move(report)};
    }
    case ModelKind::Ppc: {
      PpcNet model = init_ppc(input_dim, split.bounds, cfg.seed);
      model.out = y_transform;
      const auto t0 = std::chrono::steady_clock::now();
      TrainReport ce = train_classifier(model.classifier, batch, cfg);
      std::array<TrainReport, kExpertCount> regional;
      for (int r = 0; r < kExpertCount; ++r) {
        regional[static_cast<size_t>(r)] =
            train_regional(model.regional[static_cast<size_t>(r)], model.out, batch, static_cast<Region>(r), cfg);
      }
      TrainReport report;
      report.loss = cfg.loss;
      report.loss_history.resize(static_cast<size_t>(cfg.steps));
      for (long i = 0; i < cfg.steps; ++i) {
        double v = ce.loss_history[static_cast<size_t>(i)];
        for (const auto& r : regional) v += r.loss_history[static_cast<size_t>(i)];
        report.loss_history[static_cast<size_t>(i)] = v;
      }
      report.final_terms = regional[0].final_terms;
      for (int r = 1; r < kExpertCount; ++r) {
        const GridLossTerms& t = regional[static_cast<size_t>(r)].final_terms;
        report.final_terms.value += t.value;
        for (int m = 0; m < 2; ++m) {
          report.final_terms.dvds[m] += t.dvds[m];
          report.final_terms.dvgs[m] += t.dvgs[m];
        }
        report.final_terms.count += t.count;
      }
      if (!split.test.empty()) {
        report.classifier_accuracy = classifier_accuracy(model.classifier, make_batch(split.test, split.bounds));
      }
      report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.ppc = std::move(model);
      return {std::move(out), std::move(report)};
    }
    case ModelKind::Mnn: {
      PlainNet model{make_mnn(input_dim, cfg.seed), split.bounds, y_transform};
      TrainReport report = detail::train_plain(model.net, model.out, batch, cfg, "mnn");
      out.plain = std::move(model);
      return {std::move(out), std::move(report)};
    }
    case ModelKind::Mlp: {
      PlainNet model{make_plain_mlp(input_dim, cfg.seed), split.bounds, y_transform};
      TrainReport report = detail::train_plain(model.net, model.out, batch, cfg, "mlp");
      out.plain = std::move(model);
      return {std::move(out), std::move(report)};
    }
  }
  throw std::logic_error("train: unreachable");
}

}  // namespace prime
