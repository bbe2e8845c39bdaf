#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <future>
#include <string>
#include <vector>

#include "prime/dataset.hpp"
#include "prime/io_util.hpp"
#include "prime/training.hpp"

namespace prime {

// Headline accuracy numbers. All relative errors are computed on linear-
// scale current (10^y); log_rmse is reported alongside for transparency.
struct Metrics {
  double mre = 0.0;
  double ion_err = 0.0;
  double ioff_err = 0.0;
  std::array<double, 3> per_region_mre{0., 0., 0.};
  double log_rmse = 0.0;
};

// mean |(I - Ipred)/I| with both currents reconstructed from log10 values
inline double mre(const Eigen::VectorXd& pred_log, const Eigen::VectorXd& target_log) {
  if (pred_log.size() == 0) throw std::invalid_argument("mre: empty input");
  if (pred_log.size() != target_log.size()) throw std::invalid_argument("mre: length mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pred_log.size(); ++i) {
    acc += std::abs(1.0 - std::pow(10.0, pred_log[i] - target_log[i]));
  }
  return acc / static_cast<double>(pred_log.size());
}

namespace detail {

inline double rel_current_err(double pred_log, double target_log) {
  return std::abs(1.0 - std::pow(10.0, pred_log - target_log));
}

}  // namespace detail

// Test-split metrics: MRE over every bias point of every device, Ion/Ioff
// errors at the (0.7, 0.7) and (0, 0.7) corners averaged over devices.
inline Metrics evaluate_model(const TrainedModel& model, const std::vector<IVGrid>& grids, const NormBounds& bounds) {
  if (grids.empty()) throw std::invalid_argument("evaluate_model: no devices");
  const GridBatch batch = make_batch(grids, bounds);
  const Eigen::VectorXd pred = model_predict_batch(model, batch.X);
  Metrics m;
  m.mre = mre(pred, batch.y);
  m.log_rmse = std::sqrt((pred - batch.y).squaredNorm() / static_cast<double>(pred.size()));
  std::array<double, 3> region_acc{0., 0., 0.};
  std::array<long, 3> region_n{0, 0, 0};
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const int r = static_cast<int>(batch.region[static_cast<size_t>(i)]);
    region_acc[static_cast<size_t>(r)] += detail::rel_current_err(pred[i], batch.y[i]);
    ++region_n[static_cast<size_t>(r)];
  }
  for (int r = 0; r < 3; ++r) {
    m.per_region_mre[static_cast<size_t>(r)] =
        region_n[static_cast<size_t>(r)] > 0 ? region_acc[static_cast<size_t>(r)] / static_cast<double>(region_n[static_cast<size_t>(r)]) : 0.0;
  }
  const long per_dev = batch.samples_per_device();
  // grid layout: row-major (vgs, vds); Ion at (14, 13), Ioff at (0, 13)
  const long ion_off = 14L * batch.cols + (batch.cols - 1);
  const long ioff_off = batch.cols - 1;
  double ion_acc = 0.0, ioff_acc = 0.0;
  for (int d = 0; d < batch.device_count; ++d) {
    ion_acc += detail::rel_current_err(pred[d * per_dev + ion_off], batch.y[d * per_dev + ion_off]);
    ioff_acc += detail::rel_current_err(pred[d * per_dev + ioff_off], batch.y[d * per_dev + ioff_off]);
  }
  m.ion_err = ion_acc / batch.device_count;
  m.ioff_err = ioff_acc / batch.device_count;
  return m;
}

// Relative error of the predicted on/off currents against the oracle for one
// device.
inline std::pair<double, double> ion_ioff(const TrainedModel& model, const DeviceParams& dev) {
  const double ion_true = drain_current(dev, kBiasMax, kBiasMax);
  const double ioff_true = drain_current(dev, 0.0, kBiasMax);
  const double ion_pred = std::pow(10.0, model_predict(model, feature_vector(dev, kBiasMax, kBiasMax)).log10_ids);
  const double ioff_pred = std::pow(10.0, model_predict(model, feature_vector(dev, 0.0, kBiasMax)).log10_ids);
  return {std::abs((ion_true - ion_pred) / ion_true), std::abs((ioff_true - ioff_pred) / ioff_true)};
}

struct SeedSummary {
  std::vector<Metrics> per_seed;
  Metrics mean;
  Metrics min_e;
  Metrics max_e;
};

inline SeedSummary summarize_seeds(std::vector<Metrics> per_seed) {
  if (per_seed.empty()) throw std::invalid_argument("summarize_seeds: empty");
  SeedSummary s;
  s.per_seed = std::move(per_seed);
  auto fields = [](Metrics& m) {
    return std::array<double*, 6>{&m.mre, &m.ion_err, &m.ioff_err, &m.per_region_mre[0], &m.per_region_mre[1], &m.per_region_mre[2]};
  };
  Metrics mean{}, lo = s.per_seed.front(), hi = s.per_seed.front();
  double rmse_mean = 0.0;
  for (Metrics& m : s.per_seed) {
    auto fm = fields(m), fmean = fields(mean), flo = fields(lo), fhi = fields(hi);
    for (size_t i = 0; i < fm.size(); ++i) {
      *fmean[i] += *fm[i] / static_cast<double>(s.per_seed.size());
      *flo[i] = std::min(*flo[i], *fm[i]);
      *fhi[i] = std::max(*fhi[i], *fm[i]);
    }
    rmse_mean += m.log_rmse / static_cast<double>(s.per_seed.size());
    lo.log_rmse = std::min(lo.log_rmse, m.log_rmse);
    hi.log_rmse = std::max(hi.log_rmse, m.log_rmse);
  }
  mean.log_rmse = rmse_mean;
  s.mean = mean;
  s.min_e = lo;
  s.max_e = hi;
  return s;
}

struct BenchCell {
  CrossSectionKind shape = CrossSectionKind::Circular;
  ModelKind kind = ModelKind::Mlp;
  SeedSummary summary;
  bool failed = false;
  std::string error;
};

struct BenchConfig {
  std::vector<CrossSectionKind> shapes;
  std::vector<ModelKind> kinds;
  std::vector<uint64_t> seeds{0, 1, 2, 3, 4};
  TrainConfig base;  // seed field is replaced per run
  int train_devices = 400;
  int test_devices = 248;
  uint64_t data_seed = 0;
  int jobs = 1;
};

// Full benchmark grid: one dataset per shape, one training run per
// (shape, kind, seed). Runs are independent jobs; results merge by key, so
// the output is deterministic for any job count.
inline std::vector<BenchCell> benchmark(const BenchConfig& cfg,
                                        const std::function<void(const std::string&)>& log = nullptr) {
  cfg.base.validate();
  if (cfg.shapes.empty() || cfg.kinds.empty() || cfg.seeds.empty()) {
    throw std::invalid_argument("benchmark: shapes, kinds and seeds must be nonempty");
  }
  struct Job {
    size_t shape_i, kind_i, seed_i;
  };
  std::vector<DatasetSplit> datasets;
  datasets.reserve(cfg.shapes.size());
  for (CrossSectionKind shape : cfg.shapes) {
    if (log) log(std::string("building dataset: ") + to_string(shape));
    datasets.push_back(build_dataset(shape, cfg.data_seed, cfg.train_devices, cfg.test_devices));
  }
  std::vector<Job> jobs;
  for (size_t si = 0; si < cfg.shapes.size(); ++si)
    for (size_t ki = 0; ki < cfg.kinds.size(); ++ki)
      for (size_t di = 0; di < cfg.seeds.size(); ++di) jobs.push_back({si, ki, di});

  struct RunResult {
    Metrics metrics;
    bool failed = false;
    std::string error;
  };
  std::vector<RunResult> results(jobs.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job& job = jobs[j];
      const DatasetSplit& data = datasets[job.shape_i];
      TrainConfig run_cfg = cfg.base;
      run_cfg.seed = cfg.seeds[job.seed_i];
      try {
        auto [model, report] = train(cfg.kinds[job.kind_i], data, run_cfg);
        results[j].metrics = evaluate_model(model, data.test, data.bounds);
        if (log) {
          log(std::string(to_string(cfg.shapes[job.shape_i])) + "/" + to_string(cfg.kinds[job.kind_i]) + "/seed" +
              std::to_string(run_cfg.seed) + ": mre=" + fmt17(results[j].metrics.mre));
        }
      } catch (const std::exception& e) {
        results[j].failed = true;
        results[j].error = e.what();
      }
    }
  };
  const int nthreads = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(jobs.size())));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::future<void>> pool;
    for (int t = 0; t < nthreads; ++t) pool.push_back(std::async(std::launch::async, worker));
    for (auto& f : pool) f.get();
  }

  std::vector<BenchCell> cells;
  for (size_t si = 0; si < cfg.shapes.size(); ++si) {
    for (size_t ki = 0; ki < cfg.kinds.size(); ++ki) {
      BenchCell cell;
      cell.shape = cfg.shapes[si];
      cell.kind = cfg.kinds[ki];
      std::vector<Metrics> per_seed;
      for (size_t di = 0; di < cfg.seeds.size(); ++di) {
        const size_t j = (si * cfg.kinds.size() + ki) * cfg.seeds.size() + di;
        if (results[j].failed) {
          cell.failed = true;
          cell.error = results[j].error;
        } else {
          per_seed.push_back(results[j].metrics);
        }
      }
      if (!cell.failed && !per_seed.empty()) cell.summary = summarize_seeds(std::move(per_seed));
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

// Long-form per-seed metrics: shape,model,seed,metric,value.
inline std::string benchmark_csv(const BenchConfig& cfg, const std::vector<BenchCell>& cells) {
  std::string out = "shape,model,seed,metric,value\n";
  for (const BenchCell& c : cells) {
    if (c.failed) continue;
    for (size_t di = 0; di < c.summary.per_seed.size(); ++di) {
      const Metrics& m = c.summary.per_seed[di];
      const std::string prefix =
          std::string(to_string(c.shape)) + "," + to_string(c.kind) + "," + std::to_string(cfg.seeds[di]) + ",";
      out += prefix + "mre," + fmt17(m.mre) + "\n";
      out += prefix + "ion_err," + fmt17(m.ion_err) + "\n";
      out += prefix + "ioff_err," + fmt17(m.ioff_err) + "\n";
      out += prefix + "mre_subthreshold," + fmt17(m.per_region_mre[0]) + "\n";
      out += prefix + "mre_linear," + fmt17(m.per_region_mre[1]) + "\n";
      out += prefix + "mre_saturation," + fmt17(m.per_region_mre[2]) + "\n";
      out += prefix + "log_rmse," + fmt17(m.log_rmse) + "\n";
    }
  }
  return out;
}

// Human-readable table with the published report's column layout: per shape,
// Ion / Ioff / min_e / max_e / MRE, one row per model. Ion, Ioff and MRE are
// means over seeds; min_e/max_e are the extreme per-seed MRE values.
inline std::string benchmark_table(const std::vector<BenchCell>& cells) {
  std::vector<CrossSectionKind> shapes;
  std::vector<ModelKind> kinds;
  for (const BenchCell& c : cells) {
    if (std::find(shapes.begin(), shapes.end(), c.shape) == shapes.end()) shapes.push_back(c.shape);
    if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) kinds.push_back(c.kind);
  }
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%6.2f%%", 100.0 * v);
    return std::string(buf);
  };
  std::string out = "Model ";
  for (CrossSectionKind s : shapes) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "| %-45s", to_string(s));
    out += buf;
  }
  out += "\n      ";
  for (size_t i = 0; i < shapes.size(); ++i) out += "|    Ion     Ioff    min_e    max_e      MRE  ";
  out += "\n";
  for (ModelKind k : kinds) {
    char name[16];
    std::snprintf(name, sizeof name, "%-6s", to_string(k));
    out += name;
    for (CrossSectionKind s : shapes) {
      const auto it = std::find_if(cells.begin(), cells.end(),
                                   [&](const BenchCell& c) { return c.shape == s && c.kind == k; });
      if (it == cells.end() || it->failed) {
        out += "| FAILED                                       ";
        continue;
      }
      const SeedSummary& sum = it->summary;
      out += "| " + pct(sum.mean.ion_err) + "  " + pct(sum.mean.ioff_err) + "  " + pct(sum.min_e.mre) + "  " +
             pct(sum.max_e.mre) + "  " + pct(sum.mean.mre) + "  ";
    }
    out += "\n";
  }
  return out;
}

// ---- sweeps ----------------------------------------------------------------

using CurrentFn = std::function<double(double vgs, double vds)>;  // Ids in A

inline CurrentFn oracle_current(const DeviceParams& dev) {
  return [dev](double vgs, double vds) { return drain_current(dev, vgs, vds); };
}

inline CurrentFn surrogate_current(const TrainedModel& model, const DeviceParams& dev) {
  return [model, dev](double vgs, double vds) {
    const Prediction p = model_predict(model, feature_vector(dev, vgs, vds));
    return p.zero_current ? 0.0 : std::pow(10.0, p.log10_ids);
  };
}

enum class SweepMode { Transfer, Output };

inline SweepMode sweep_mode_from_string(const std::string& s) {
  if (s == "transfer") return SweepMode::Transfer;
  if (s == "output") return SweepMode::Output;
  throw std::invalid_argument("unknown sweep mode: " + s);
}

inline constexpr int kSweepPoints = 141;   // 5 mV over [0, 0.7]
inline constexpr double kSweepStep = 0.005;

struct SweepCurve {
  DeviceParams device;
  SweepMode mode = SweepMode::Transfer;
  double fixed = 0.0;
  std::vector<double> axis;  // swept bias
  std::vector<double> ids;   // A
  std::vector<double> gm;    // dIds/dVgs, A/V
  std::vector<double> gds;   // dIds/dVds, A/V
};

// Fine-grid sweep of Ids with both conductances from the shared fd stencils.
// The cross-axis derivative uses a 3-sample lane around the fixed bias,
// one-sided at the [0, 0.7] borders.
inline SweepCurve sweep(const CurrentFn& current, const DeviceParams& dev, SweepMode mode, double fixed) {
  if (fixed < 0.0 || fixed > kBiasMax) throw std::invalid_argument("sweep: fixed bias out of [0, 0.7]");
  SweepCurve c;
  c.device = dev;
  c.mode = mode;
  c.fixed = fixed;
  c.axis.resize(kSweepPoints);
  for (int i = 0; i < kSweepPoints; ++i) c.axis[static_cast<size_t>(i)] = i * kSweepStep;
  // cross-axis lane: [fixed-h, fixed, fixed+h] clamped into range
  double lane0 = fixed - kSweepStep;
  int pick = 1;
  if (lane0 < 0.0) {
    lane0 = 0.0;
    pick = 0;
  } else if (fixed + kSweepStep > kBiasMax) {
    lane0 = kBiasMax - 2 * kSweepStep;
    pick = 2;
  }
  auto eval = [&](double a, double f) { return mode == SweepMode::Transfer ? current(a, f) : current(f, a); };
  c.ids.resize(kSweepPoints);
  std::vector<std::array<double, 3>> lane(kSweepPoints);
  for (int i = 0; i < kSweepPoints; ++i) {
    const double a = c.axis[static_cast<size_t>(i)];
    c.ids[static_cast<size_t>(i)] = eval(a, fixed);
    for (int k = 0; k < 3; ++k) lane[static_cast<size_t>(i)][static_cast<size_t>(k)] = eval(a, lane0 + k * kSweepStep);
  }
  const std::vector<double> along = fd_derivative(c.ids, 1, kSweepStep);
  std::vector<double> cross(kSweepPoints);
  for (int i = 0; i < kSweepPoints; ++i) {
    const std::vector<double> d = fd_derivative(std::span<const double>(lane[static_cast<size_t>(i)].data(), 3), 1, kSweepStep);
    cross[static_cast<size_t>(i)] = d[static_cast<size_t>(pick)];
  }
  if (mode == SweepMode::Transfer) {
    c.gm = along;
    c.gds = cross;
  } else {
    c.gm = cross;
    c.gds = along;
  }
  return c;
}

inline std::string sweep_csv(const SweepCurve& c) {
  std::string out = c.mode == SweepMode::Transfer ? "vgs,ids,gm,gds\n" : "vds,ids,gm,gds\n";
  for (size_t i = 0; i < c.axis.size(); ++i) {
    out += fmt17(c.axis[i]) + "," + fmt17(c.ids[i]) + "," + fmt17(c.gm[i]) + "," + fmt17(c.gds[i]) + "\n";
  }
  return out;
}

// Mean gate weight per ground-truth region; purely descriptive.
inline Eigen::Matrix3d gate_report(const PrimeModel& model, const std::vector<IVGrid>& grids,
                                   const NormBounds& bounds) {
  const GridBatch batch = make_batch(grids, bounds);
  PrimeBatchCache cache;
  prime_forward_batch(model, batch.X, cache);
  Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
  Eigen::Vector3d counts = Eigen::Vector3d::Zero();
  for (Eigen::Index i = 0; i < batch.X.rows(); ++i) {
    const int r = static_cast<int>(batch.region[static_cast<size_t>(i)]);
    acc.row(r) += cache.p.row(i);
    counts[r] += 1.0;
  }
  for (int r = 0; r < 3; ++r) {
    if (counts[r] > 0) acc.row(r) /= counts[r];
  }
  return acc;  // rows: region, cols: expert
}

inline std::string gate_report_csv(const Eigen::Matrix3d& rep) {
  std::string out = "region,expert0,expert1,expert2\n";
  const char* names[3] = {"subthreshold", "linear", "saturation"};
  for (int r = 0; r < 3; ++r) {
    out += names[r];
    for (int j = 0; j < 3; ++j) out += "," + fmt17(rep(r, j));
    out += "\n";
  }
  return out;
}

}  // namespace prime
