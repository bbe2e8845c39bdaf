// prime: data generation, training, evaluation and circuit application for
// the GAA transistor surrogate models.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "prime/circuit.hpp"
#include "prime/dataset.hpp"
#include "prime/evaluation.hpp"
#include "prime/io_util.hpp"
#include "prime/model_io.hpp"
#include "prime/training.hpp"
#include "prime/version.hpp"

namespace fs = std::filesystem;
using namespace prime;

namespace {

fs::path resolve_out(std::string out, const std::string& command) {
  if (!out.empty()) return out;
  const char* root = std::getenv("PRIME_OUT");
  if (root && *root) return fs::path(root) / command;
  throw CLI::ValidationError("--out", "missing --out and PRIME_OUT is not set");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void finish(const fs::path& out_dir, RunManifest manifest) {
  const fs::path p = write_manifest(out_dir, manifest);
  std::cout << "manifest: " << p.string() << "\n";
}

std::string loss_csv(const TrainReport& report) {
  std::string out = "step,loss\n";
  for (size_t i = 0; i < report.loss_history.size(); ++i) {
    out += std::to_string(i) + "," + fmt17(report.loss_history[i]) + "\n";
  }
  return out;
}

nlohmann::json timing_json(const TrainReport& report) {
  nlohmann::json j;
  j["wall_seconds"] = report.wall_seconds;
  if (report.classifier_accuracy >= 0.0) j["classifier_accuracy"] = report.classifier_accuracy;
  const double n = std::max(1L, report.final_terms.count);
  j["final_loss_terms"] = {{"value", report.final_terms.value / n},
                           {"dvds1", report.loss.a[0] * report.final_terms.dvds[0] / n},
                           {"dvds2", report.loss.a[1] * report.final_terms.dvds[1] / n},
                           {"dvgs1", report.loss.b[0] * report.final_terms.dvgs[0] / n},
                           {"dvgs2", report.loss.b[1] * report.final_terms.dvgs[1] / n}};
  return j;
}

const DeviceParams& pick_device(const DatasetSplit& data, int index) {
  if (index < 0 || static_cast<size_t>(index) >= data.test.size()) {
    throw std::runtime_error("--device-index out of range: test split has " + std::to_string(data.test.size()) +
                             " devices");
  }
  return data.test[static_cast<size_t>(index)].device;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PRIME mixture-of-experts surrogate for GAA transistor I-V prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // gen-data ---------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic I-V dataset from the analytical device model");
  std::string gen_shape = "circular", gen_out;
  uint64_t gen_seed = 0;
  int gen_train = 400, gen_test = 248;
  gen->add_option("--shape", gen_shape, "cross-section: circular|rectangular|triangular")
      ->check(CLI::IsMember({"circular", "rectangular", "triangular"}));
  gen->add_option("--seed", gen_seed, "shuffle seed");
  gen->add_option("--train-devices", gen_train, "training device count")->check(CLI::PositiveNumber);
  gen->add_option("--test-devices", gen_test, "test device count")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "output directory");

  // train ------------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "train one model on a generated dataset");
  std::string tr_model = "prime", tr_data, tr_out;
  uint64_t tr_seed = 0;
  long tr_steps = 5000;
  double tr_lr = 1e-3, tr_a = 5e-4, tr_b = 5e-4;
  int tr_batch = 0;
  tr->add_option("--model", tr_model, "model kind: prime|ppc|mnn|mlp")
      ->check(CLI::IsMember({"prime", "ppc", "mnn", "mlp"}));
  tr->add_option("--data", tr_data, "dataset directory from gen-data")->required();
  tr->add_option("--seed", tr_seed, "initialization seed");
  tr->add_option("--steps", tr_steps, "optimization steps")->check(CLI::PositiveNumber);
  tr->add_option("--lr", tr_lr, "Adam learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--a", tr_a, "vds-derivative penalty coefficient (both orders)")->check(CLI::NonNegativeNumber);
  tr->add_option("--b", tr_b, "vgs-derivative penalty coefficient (both orders)")->check(CLI::NonNegativeNumber);
  tr->add_option("--batch", tr_batch, "devices per step (0 = full batch)")->check(CLI::NonNegativeNumber);
  tr->add_option("--out", tr_out, "output directory");

  // eval -------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "evaluate a trained model on a dataset's test split");
  std::string ev_model, ev_data, ev_out;
  ev->add_option("--model", ev_model, "model file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--out", ev_out, "output directory");

  // bench ------------------------------------------------------------------
  auto* be = app.add_subcommand("bench", "train/evaluate a model grid and emit the comparison report");
  std::string be_shapes = "circular,triangular,rectangular", be_models = "prime,ppc,mnn,mlp", be_out;
  int be_seeds = 5, be_train = 400, be_test = 248, be_jobs = 0;
  long be_steps = 5000;
  double be_lr = 1e-3, be_a = 5e-4, be_b = 5e-4;
  uint64_t be_data_seed = 0;
  be->add_option("--shapes", be_shapes, "comma list of cross-sections");
  be->add_option("--models", be_models, "comma list of model kinds");
  be->add_option("--seeds", be_seeds, "number of seeds (0..n-1)")->check(CLI::PositiveNumber);
  be->add_option("--steps", be_steps, "optimization steps per run")->check(CLI::PositiveNumber);
  be->add_option("--lr", be_lr, "Adam learning rate")->check(CLI::PositiveNumber);
  be->add_option("--a", be_a, "vds-derivative penalty coefficient")->check(CLI::NonNegativeNumber);
  be->add_option("--b", be_b, "vgs-derivative penalty coefficient")->check(CLI::NonNegativeNumber);
  be->add_option("--train-devices", be_train, "training devices per shape")->check(CLI::PositiveNumber);
  be->add_option("--test-devices", be_test, "test devices per shape")->check(CLI::PositiveNumber);
  be->add_option("--data-seed", be_data_seed, "dataset shuffle seed");
  be->add_option("--jobs", be_jobs, "parallel training jobs (0 = machine parallelism)")->check(CLI::NonNegativeNumber);
  be->add_option("--out", be_out, "output directory");

  // sweep ------------------------------------------------------------------
  auto* sw = app.add_subcommand("sweep", "fine-grid I-V sweep with gm/gds for one test device");
  std::string sw_model, sw_data, sw_mode = "transfer", sw_out;
  bool sw_oracle = false;
  int sw_device = 0;
  double sw_fixed = 0.7;
  sw->add_option("--model", sw_model, "model file (omit with --oracle)");
  sw->add_flag("--oracle", sw_oracle, "sweep the analytical device model instead of a surrogate");
  sw->add_option("--data", sw_data, "dataset directory")->required();
  sw->add_option("--device-index", sw_device, "index into the test split")->check(CLI::NonNegativeNumber);
  sw->add_option("--mode", sw_mode, "transfer (sweep vgs) | output (sweep vds)")
      ->check(CLI::IsMember({"transfer", "output"}));
  sw->add_option("--fixed", sw_fixed, "fixed bias of the other terminal, V")->check(CLI::Range(0.0, 0.7));
  sw->add_option("--out", sw_out, "output directory");

  // inverter ---------------------------------------------------------------
  auto* inv = app.add_subcommand("inverter", "inverter VTC and transient with the device as both pull networks");
  std::string inv_model, inv_data, inv_out;
  bool inv_oracle = false;
  int inv_device = 0, inv_npoints = 141;
  double inv_cload = kDefaultLoadF, inv_dt = 1e-14, inv_tend = 2e-9;
  inv->add_option("--model", inv_model, "model file (omit with --oracle)");
  inv->add_flag("--oracle", inv_oracle, "use the analytical device model");
  inv->add_option("--data", inv_data, "dataset directory")->required();
  inv->add_option("--device-index", inv_device, "index into the test split")->check(CLI::NonNegativeNumber);
  inv->add_option("--npoints", inv_npoints, "VTC input points")->check(CLI::Range(2, 100000));
  inv->add_option("--cload", inv_cload, "output load capacitance, F")->check(CLI::PositiveNumber);
  inv->add_option("--dt", inv_dt, "transient time step, s")->check(CLI::PositiveNumber);
  inv->add_option("--t-end", inv_tend, "transient end time, s")->check(CLI::PositiveNumber);
  inv->add_option("--out", inv_out, "output directory");

  // gate-report ------------------------------------------------------------
  auto* gr = app.add_subcommand("gate-report", "mean gate weight per operating region for a trained PRIME model");
  std::string gr_model, gr_data, gr_out;
  gr->add_option("--model", gr_model, "PRIME model file")->required();
  gr->add_option("--data", gr_data, "dataset directory")->required();
  gr->add_option("--out", gr_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      const fs::path out = resolve_out(gen_out, "gen-data");
      const CrossSectionKind shape = cross_section_from_string(gen_shape);
      DatasetSplit split = build_dataset(shape, gen_seed, gen_train, gen_test);
      save_dataset(split, out);
      for (const std::string& w : split.warnings) std::cerr << "warning: " << w << "\n";
      RunManifest m;
      m.command = "gen-data";
      m.flags = {{"shape", gen_shape}, {"seed", std::to_string(gen_seed)},
                 {"train-devices", std::to_string(gen_train)}, {"test-devices", std::to_string(gen_test)}};
      m.input_hashes["oracle_constants"] = hash_hex(oracle_constants_hash());
      m.outputs = {"metadata.json", "train.csv", "test.csv"};
      finish(out, std::move(m));
    } else if (tr->parsed()) {
      const fs::path out = resolve_out(tr_out, "train");
      const DatasetSplit data = load_dataset(tr_data);
      TrainConfig cfg;
      cfg.steps = tr_steps;
      cfg.lr = tr_lr;
      cfg.seed = tr_seed;
      cfg.batch_devices = tr_batch;
      cfg.loss.a = {tr_a, tr_a};
      cfg.loss.b = {tr_b, tr_b};
      auto [model, report] = train(model_kind_from_string(tr_model), data, cfg);
      ModelProvenance prov;
      prov.seed = tr_seed;
      prov.steps = tr_steps;
      prov.lr = tr_lr;
      prov.loss = cfg.loss;
      prov.dataset_hash = dir_hash_hex(tr_data);
      prov.shape = to_string(data.shape);
      fs::create_directories(out);
      save_model(model, prov, out / "model.json");
      write_file(out / "loss.csv", loss_csv(report));
      write_file(out / "timing.json", timing_json(report).dump(2) + "\n");
      RunManifest m;
      m.command = "train";
      m.flags = {{"model", tr_model},        {"data", tr_data},
                 {"seed", std::to_string(tr_seed)}, {"steps", std::to_string(tr_steps)},
                 {"lr", fmt17(tr_lr)},       {"a", fmt17(tr_a)},
                 {"b", fmt17(tr_b)},         {"batch", std::to_string(tr_batch)}};
      m.input_hashes["dataset"] = prov.dataset_hash;
      m.outputs = {"model.json", "loss.csv", "timing.json"};
      finish(out, std::move(m));
    } else if (ev->parsed()) {
      const fs::path out = resolve_out(ev_out, "eval");
      const DatasetSplit data = load_dataset(ev_data);
      const TrainedModel model = load_model(ev_model);
      const Metrics met = evaluate_model(model, data.test, data.bounds);
      std::string csv = "metric,value\n";
      csv += "mre," + fmt17(met.mre) + "\n";
      csv += "ion_err," + fmt17(met.ion_err) + "\n";
      csv += "ioff_err," + fmt17(met.ioff_err) + "\n";
      csv += "mre_subthreshold," + fmt17(met.per_region_mre[0]) + "\n";
      csv += "mre_linear," + fmt17(met.per_region_mre[1]) + "\n";
      csv += "mre_saturation," + fmt17(met.per_region_mre[2]) + "\n";
      csv += "log_rmse," + fmt17(met.log_rmse) + "\n";
      fs::create_directories(out);
      write_file(out / "metrics.csv", csv);
      RunManifest m;
      m.command = "eval";
      m.flags = {{"model", ev_model}, {"data", ev_data}};
      m.input_hashes["dataset"] = dir_hash_hex(ev_data);
      m.input_hashes["model"] = hash_hex(file_hash(ev_model));
      m.outputs = {"metrics.csv"};
      finish(out, std::move(m));
    } else if (be->parsed()) {
      const fs::path out = resolve_out(be_out, "bench");
      BenchConfig cfg;
      for (const std::string& s : split_list(be_shapes)) cfg.shapes.push_back(cross_section_from_string(s));
      for (const std::string& s : split_list(be_models)) cfg.kinds.push_back(model_kind_from_string(s));
      cfg.seeds.clear();
      for (int s = 0; s < be_seeds; ++s) cfg.seeds.push_back(static_cast<uint64_t>(s));
      cfg.base.steps = be_steps;
      cfg.base.lr = be_lr;
      cfg.base.loss.a = {be_a, be_a};
      cfg.base.loss.b = {be_b, be_b};
      cfg.train_devices = be_train;
      cfg.test_devices = be_test;
      cfg.data_seed = be_data_seed;
      cfg.jobs = be_jobs > 0 ? be_jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
      const auto t0 = std::chrono::steady_clock::now();
      const std::vector<BenchCell> cells = benchmark(cfg, [](const std::string& s) { std::cerr << s << "\n"; });
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      fs::create_directories(out);
      write_file(out / "metrics.csv", benchmark_csv(cfg, cells));
      write_file(out / "table.txt", benchmark_table(cells));
      nlohmann::json timing;
      timing["wall_seconds"] = wall;
      write_file(out / "timing.json", timing.dump(2) + "\n");
      std::cout << benchmark_table(cells);
      RunManifest m;
      m.command = "bench";
      m.flags = {{"shapes", be_shapes},  {"models", be_models},
                 {"seeds", std::to_string(be_seeds)}, {"steps", std::to_string(be_steps)},
                 {"lr", fmt17(be_lr)},   {"a", fmt17(be_a)},
                 {"b", fmt17(be_b)},     {"train-devices", std::to_string(be_train)},
                 {"test-devices", std::to_string(be_test)}, {"data-seed", std::to_string(be_data_seed)}};
      m.input_hashes["oracle_constants"] = hash_hex(oracle_constants_hash());
      m.outputs = {"metrics.csv", "table.txt", "timing.json"};
      finish(out, std::move(m));
    } else if (sw->parsed()) {
      const fs::path out = resolve_out(sw_out, "sweep");
      if (!sw_oracle && sw_model.empty()) {
        throw CLI::ValidationError("--model", "pass a model file or --oracle");
      }
      if (sw_oracle && !sw_model.empty()) {
        throw CLI::ValidationError("--model", "--model and --oracle are mutually exclusive");
      }
      const DatasetSplit data = load_dataset(sw_data);
      const DeviceParams& dev = pick_device(data, sw_device);
      CurrentFn fn;
      RunManifest m;
      if (sw_oracle) {
        fn = oracle_current(dev);
      } else {
        const TrainedModel model = load_model(sw_model);
        fn = surrogate_current(model, dev);
        m.input_hashes["model"] = hash_hex(file_hash(sw_model));
      }
      const SweepCurve curve = sweep(fn, dev, sweep_mode_from_string(sw_mode), sw_fixed);
      fs::create_directories(out);
      write_file(out / "sweep.csv", sweep_csv(curve));
      m.command = "sweep";
      m.flags = {{"model", sw_oracle ? "oracle" : sw_model}, {"data", sw_data},
                 {"device-index", std::to_string(sw_device)}, {"mode", sw_mode}, {"fixed", fmt17(sw_fixed)}};
      m.input_hashes["dataset"] = dir_hash_hex(sw_data);
      m.outputs = {"sweep.csv"};
      finish(out, std::move(m));
    } else if (inv->parsed()) {
      const fs::path out = resolve_out(inv_out, "inverter");
      if (!inv_oracle && inv_model.empty()) {
        throw CLI::ValidationError("--model", "pass a model file or --oracle");
      }
      if (inv_oracle && !inv_model.empty()) {
        throw CLI::ValidationError("--model", "--model and --oracle are mutually exclusive");
      }
      const DatasetSplit data = load_dataset(inv_data);
      const DeviceParams& dev = pick_device(data, inv_device);
      CurrentFn fn;
      RunManifest m;
      if (inv_oracle) {
        fn = oracle_current(dev);
      } else {
        const TrainedModel model = load_model(inv_model);
        fn = surrogate_current(model, dev);
        m.input_hashes["model"] = hash_hex(file_hash(inv_model));
      }
      const DevicePair pair = make_inverter_pair(fn);
      const std::vector<VtcPoint> vtc = inverter_vtc(pair, inv_npoints);
      const Waveform wave = inverter_transient(
          pair, inv_cload, [](double t) { return t >= 0.0 ? kVdd : 0.0; }, inv_dt, inv_tend);
      fs::create_directories(out);
      write_file(out / "vtc.csv", vtc_csv(vtc));
      write_file(out / "transient.csv", waveform_csv(wave));
      m.command = "inverter";
      m.flags = {{"model", inv_oracle ? "oracle" : inv_model}, {"data", inv_data},
                 {"device-index", std::to_string(inv_device)}, {"npoints", std::to_string(inv_npoints)},
                 {"cload", fmt17(inv_cload)}, {"dt", fmt17(inv_dt)}, {"t-end", fmt17(inv_tend)}};
      m.input_hashes["dataset"] = dir_hash_hex(inv_data);
      m.outputs = {"vtc.csv", "transient.csv"};
      finish(out, std::move(m));
    } else if (gr->parsed()) {
      const fs::path out = resolve_out(gr_out, "gate-report");
      const DatasetSplit data = load_dataset(gr_data);
      const TrainedModel model = load_model(gr_model);
      if (model.kind != ModelKind::Prime) throw std::runtime_error("gate-report: model file is not a PRIME model");
      const Eigen::Matrix3d rep = gate_report(*model.prime, data.test, data.bounds);
      fs::create_directories(out);
      write_file(out / "gate_report.csv", gate_report_csv(rep));
      RunManifest m;
      m.command = "gate-report";
      m.flags = {{"model", gr_model}, {"data", gr_data}};
      m.input_hashes["dataset"] = dir_hash_hex(gr_data);
      m.input_hashes["model"] = hash_hex(file_hash(gr_model));
      m.outputs = {"gate_report.csv"};
      finish(out, std::move(m));
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
