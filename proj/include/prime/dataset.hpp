#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prime/device.hpp"
#include "prime/feature.hpp"
#include "prime/io_util.hpp"

namespace prime {

enum class Region { Subthreshold, Linear, Saturation };

inline const char* to_string(Region r) {
  switch (r) {
    case Region::Subthreshold: return "subthreshold";
    case Region::Linear: return "linear";
    case Region::Saturation: return "saturation";
  }
  throw std::logic_error("unknown region");
}

inline Region region_from_string(const std::string& s) {
  if (s == "subthreshold") return Region::Subthreshold;
  if (s == "linear") return Region::Linear;
  if (s == "saturation") return Region::Saturation;
  throw std::invalid_argument("unknown region: " + s);
}

struct BiasPoint {
  double vgs = 0.0;
  double vds = 0.0;
};

struct Sample {
  Eigen::VectorXd x;  // [z_1..z_k, vgs, vds], physical units
  double y = 0.0;     // log10(Ids in A)
  Region region = Region::Subthreshold;
};

inline constexpr double kBiasStep = 0.05;
inline constexpr double kBiasMax = 0.7;
inline constexpr double kVthExtractVds = 0.05;
inline constexpr double kVthCriterionA = 100e-9;  // constant-current criterion, A, scaled by Weff/lg
inline constexpr double kVthToleranceV = 1e-4;

// 0, 0.05, ..., 0.7
inline std::vector<double> table1_bias_axis() {
  std::vector<double> v(15);
  for (int i = 0; i < 15; ++i) v[static_cast<size_t>(i)] = i * kBiasStep;
  return v;
}

inline std::vector<double> table1_vds_positive_axis() {
  std::vector<double> v(14);
  for (int i = 1; i < 15; ++i) v[static_cast<size_t>(i - 1)] = i * kBiasStep;
  return v;
}

// Parameter value lists of the data-generation grid.
struct Table1 {
  std::vector<double> lg{12, 14, 16, 18, 20, 22};
  std::vector<double> r{2, 3, 4, 5};
  std::vector<double> h{2, 3, 4};
  std::vector<double> w{2, 3, 4};
  std::vector<double> tox{0.5, 1.0, 1.5};
  std::vector<double> nsd{0.5e20, 1e20, 2e20};
  std::vector<double> eps_ox{3.9, 7.5, 22};
};

inline const Table1& table1() {
  static const Table1 t;
  return t;
}

inline NormBounds table1_bounds(CrossSectionKind kind) {
  const Table1& t = table1();
  NormBounds b;
  b.names = feature_names(kind);
  auto range = [](const std::vector<double>& v) { return std::pair{v.front(), v.back()}; };
  auto push = [&](const std::vector<double>& v) {
    auto [lo, hi] = range(v);
    b.lo.push_back(lo);
    b.hi.push_back(hi);
  };
  push(t.lg);
  if (kind == CrossSectionKind::Rectangular) {
    push(t.h);
    push(t.w);
  } else {
    push(t.r);
  }
  push(t.tox);
  push(t.nsd);
  push(t.eps_ox);
  b.lo.push_back(0.0);
  b.hi.push_back(kBiasMax);  // vgs
  b.lo.push_back(0.0);
  b.hi.push_back(kBiasMax);  // vds
  b.validate();
  return b;
}

inline constexpr int kEnumeratedDeviceCount = 648;
inline constexpr uint64_t kRectSubsampleSeed = 0x52454354ULL;  // fixed; part of the dataset definition

// Full factorial over the Table-1 value lists, lexicographic order. The
// rectangular factorial (1458) is subsampled to 648 with a fixed seed so all
// three shapes carry the same device count.
inline std::vector<DeviceParams> enumerate_devices(CrossSectionKind kind) {
  const Table1& t = table1();
  std::vector<DeviceParams> out;
  if (kind == CrossSectionKind::Rectangular) {
    for (double lg : t.lg)
      for (double h : t.h)
        for (double w : t.w)
          for (double tox : t.tox)
            for (double nsd : t.nsd)
              for (double eox : t.eps_ox)
                out.push_back({CrossSection::rectangular(h, w), lg, tox, nsd, eox});
    std::vector<size_t> idx(out.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(kRectSubsampleSeed);
    rng.shuffle(idx);
    idx.resize(kEnumeratedDeviceCount);
    std::sort(idx.begin(), idx.end());  // keep lexicographic order of the survivors
    std::vector<DeviceParams> kept;
    kept.reserve(idx.size());
    for (size_t i : idx) kept.push_back(out[i]);
    return kept;
  }
  for (double lg : t.lg)
    for (double r : t.r)
      for (double tox : t.tox)
        for (double nsd : t.nsd)
          for (double eox : t.eps_ox) {
            CrossSection s = kind == CrossSectionKind::Circular ? CrossSection::circular(r)
                                                                : CrossSection::triangular(r);
            out.push_back({s, lg, tox, nsd, eox});
          }
  return out;
}

// Rectangular factorial size before subsampling.
inline size_t rectangular_factorial_count() {
  const Table1& t = table1();
  return t.lg.size() * t.h.size() * t.w.size() * t.tox.size() * t.nsd.size() * t.eps_ox.size();
}

enum class VthFlag { Ok, NoCrossingHigh, NoCrossingLow, NonMonotone };

struct VthResult {
  double vth = 0.0;
  VthFlag flag = VthFlag::Ok;
};

// Constant-current threshold: bisection on vgs in [0, 0.7] at vds = 0.05 V
// for the crossing Ids = 100 nA * Weff/lg. Returns the clamped endpoint,
// flagged, when the source never crosses the criterion.
inline VthResult extract_vth(const DeviceParams& dev, const std::function<double(double, double)>& current_source) {
  const double icrit = kVthCriterionA * effective_width(dev.shape) / dev.lg;
  // coarse monotonicity scan on the bias lattice
  double prev = current_source(0.0, kVthExtractVds);
  for (int i = 1; i < 15; ++i) {
    const double cur = current_source(i * kBiasStep, kVthExtractVds);
    if (cur < prev) return {0.0, VthFlag::NonMonotone};
    prev = cur;
  }
  double lo = 0.0, hi = kBiasMax;
  const double f_lo = current_source(lo, kVthExtractVds) - icrit;
  const double f_hi = current_source(hi, kVthExtractVds) - icrit;
  if (f_hi < 0.0) return {kBiasMax, VthFlag::NoCrossingHigh};
  if (f_lo > 0.0) return {0.0, VthFlag::NoCrossingLow};
  while (hi - lo > kVthToleranceV) {
    const double mid = 0.5 * (lo + hi);
    if (current_source(mid, kVthExtractVds) - icrit >= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return {0.5 * (lo + hi), VthFlag::Ok};
}

inline Region label_region(double vgs, double vds, double vth) {
  if (vgs <= vth) return Region::Subthreshold;
  return vds < vgs - vth ? Region::Linear : Region::Saturation;
}

// One device's worth of regression data: log10(Ids) over the bias lattice,
// vds > 0 columns only, plus the extracted threshold voltage.
struct IVGrid {
  DeviceParams device;
  std::vector<double> vgs_axis;  // 15 values
  std::vector<double> vds_axis;  // 14 values, vds > 0
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> log_ids;  // 15 x 14
  double vth_cc = 0.0;
  VthFlag vth_flag = VthFlag::Ok;

  Region region_at(int i, int j) const { return label_region(vgs_axis[static_cast<size_t>(i)], vds_axis[static_cast<size_t>(j)], vth_cc); }
  long sample_count() const { return log_ids.size(); }
};

struct DatasetSplit {
  CrossSectionKind shape = CrossSectionKind::Circular;
  uint64_t seed = 0;
  std::vector<IVGrid> train;
  std::vector<IVGrid> test;
  NormBounds bounds;
  std::vector<std::string> warnings;
};

inline IVGrid build_grid(const DeviceParams& dev) {
  dev.validate();
  IVGrid g;
  g.device = dev;
  g.vgs_axis = table1_bias_axis();
  g.vds_axis = table1_vds_positive_axis();
  const VthResult vth = extract_vth(dev, [&dev](double vgs, double vds) { return drain_current(dev, vgs, vds); });
  g.vth_cc = vth.vth;
  g.vth_flag = vth.flag;
  g.log_ids.resize(15, 14);
  for (int i = 0; i < 15; ++i) {
    for (int j = 0; j < 14; ++j) {
      g.log_ids(i, j) = std::log10(drain_current(dev, g.vgs_axis[static_cast<size_t>(i)], g.vds_axis[static_cast<size_t>(j)]));
    }
  }
  return g;
}

// Enumerate, simulate, extract Vth, label, shuffle, split at device level.
// train_count/test_count default to the full 400/248 partition of the 648
// enumerated devices; smaller values give the scaled-down splits.
inline DatasetSplit build_dataset(CrossSectionKind kind, uint64_t seed, int train_count = 400, int test_count = 248) {
  std::vector<DeviceParams> devices = enumerate_devices(kind);
  if (train_count < 1 || test_count < 1 || static_cast<size_t>(train_count) + static_cast<size_t>(test_count) > devices.size()) {
    throw std::invalid_argument("build_dataset: split sizes must be positive and fit the enumerated devices");
  }
  std::vector<size_t> order(devices.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  DatasetSplit split;
  split.shape = kind;
  split.seed = seed;
  split.bounds = table1_bounds(kind);
  auto add = [&](std::vector<IVGrid>& dst, size_t device_index) {
    IVGrid g = build_grid(devices[device_index]);
    if (g.vth_flag != VthFlag::Ok) {
      split.warnings.push_back("vth extraction flagged for device " + std::to_string(device_index) +
                               (g.vth_flag == VthFlag::NonMonotone ? " (non-monotone source)" : " (no crossing)"));
    }
    dst.push_back(std::move(g));
  };
  for (int i = 0; i < train_count; ++i) add(split.train, order[static_cast<size_t>(i)]);
  for (int i = 0; i < test_count; ++i) add(split.test, order[static_cast<size_t>(train_count + i)]);
  return split;
}

// ---- persistence ----------------------------------------------------------
//
// Dataset directory layout:
//   metadata.json   schema version, shape, seed, oracle hash, value lists,
//                   bounds, split sizes, warnings
//   train.csv       device,<params...>,vgs,vds,log10_ids,region,vth_cc
//   test.csv
// Floats carry 17 significant digits, so a save/load round trip is bit-exact.

namespace detail {

inline std::vector<std::string> device_param_names(CrossSectionKind kind) {
  if (kind == CrossSectionKind::Rectangular) return {"lg", "h", "w", "tox", "nsd", "eps_ox"};
  return {"lg", "r", "tox", "nsd", "eps_ox"};
}

inline std::vector<double> device_param_values(const DeviceParams& d) {
  if (d.shape.kind == CrossSectionKind::Rectangular) return {d.lg, d.shape.h, d.shape.w, d.tox, d.nsd, d.eps_ox};
  return {d.lg, d.shape.r, d.tox, d.nsd, d.eps_ox};
}

inline DeviceParams device_from_values(CrossSectionKind kind, const std::vector<double>& v) {
  if (kind == CrossSectionKind::Rectangular) {
    return {CrossSection::rectangular(v[1], v[2]), v[0], v[3], v[4], v[5]};
  }
  CrossSection s = kind == CrossSectionKind::Circular ? CrossSection::circular(v[1]) : CrossSection::triangular(v[1]);
  return {s, v[0], v[2], v[3], v[4]};
}

inline std::string split_to_csv(const std::vector<IVGrid>& grids, CrossSectionKind kind) {
  std::string out = "device";
  for (const auto& n : device_param_names(kind)) out += "," + n;
  out += ",vgs,vds,log10_ids,region,vth_cc\n";
  for (size_t d = 0; d < grids.size(); ++d) {
    const IVGrid& g = grids[d];
    std::string prefix = std::to_string(d);
    for (double v : device_param_values(g.device)) prefix += "," + fmt17(v);
    for (int i = 0; i < g.log_ids.rows(); ++i) {
      for (int j = 0; j < g.log_ids.cols(); ++j) {
        out += prefix;
        out += ",";
        out += fmt17(g.vgs_axis[static_cast<size_t>(i)]);
        out += ",";
        out += fmt17(g.vds_axis[static_cast<size_t>(j)]);
        out += ",";
        out += fmt17(g.log_ids(i, j));
        out += ",";
        out += to_string(g.region_at(i, j));
        out += ",";
        out += fmt17(g.vth_cc);
        out += "\n";
      }
    }
  }
  return out;
}

inline std::vector<IVGrid> split_from_csv(const std::string& content, CrossSectionKind kind,
                                          const std::filesystem::path& src) {
  const auto param_names = device_param_names(kind);
  const size_t ncols = 1 + param_names.size() + 5;
  std::vector<IVGrid> grids;
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset: empty csv " + src.string());
  long row = 0;
  const auto vgs_axis = table1_bias_axis();
  const auto vds_axis = table1_vds_positive_axis();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != ncols) throw std::runtime_error("dataset: malformed row in " + src.string());
    const long device = std::stol(f[0]);
    const int i = static_cast<int>(row % 210) / 14;
    const int j = static_cast<int>(row % 210) % 14;
    if (device != row / 210) throw std::runtime_error("dataset: device rows out of order in " + src.string());
    std::vector<double> pv;
    for (size_t c = 0; c < param_names.size(); ++c) pv.push_back(std::stod(f[1 + c]));
    if (i == 0 && j == 0) {
      IVGrid g;
      g.device = device_from_values(kind, pv);
      g.vgs_axis = vgs_axis;
      g.vds_axis = vds_axis;
      g.log_ids.resize(15, 14);
      g.vth_cc = std::stod(f[ncols - 1]);
      grids.push_back(std::move(g));
    }
    IVGrid& g = grids.back();
    g.log_ids(i, j) = std::stod(f[1 + param_names.size() + 2]);
    ++row;
  }
  if (row % 210 != 0) throw std::runtime_error("dataset: truncated csv " + src.string());
  return grids;
}

}  // namespace detail

inline void save_dataset(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["schema_version"] = kDatasetSchemaVersion;
  meta["shape"] = to_string(split.shape);
  meta["seed"] = split.seed;
  meta["train_devices"] = split.train.size();
  meta["test_devices"] = split.test.size();
  meta["oracle_constants_hash"] = hash_hex(oracle_constants_hash());
  const Table1& t = table1();
  meta["table1"] = {{"lg", t.lg}, {"r", t.r}, {"h", t.h}, {"w", t.w},
                    {"tox", t.tox}, {"nsd", t.nsd}, {"eps_ox", t.eps_ox}};
  meta["bounds"] = {{"names", split.bounds.names}, {"lo", split.bounds.lo}, {"hi", split.bounds.hi}};
  meta["warnings"] = split.warnings;
  write_file(dir / "metadata.json", meta.dump(2) + "\n");
  write_file(dir / "train.csv", detail::split_to_csv(split.train, split.shape));
  write_file(dir / "test.csv", detail::split_to_csv(split.test, split.shape));
}

inline DatasetSplit load_dataset(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir / "metadata.json"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("dataset: malformed metadata.json in " + dir.string() + ": " + e.what());
  }
  if (!meta.contains("schema_version") || meta["schema_version"].get<int>() != kDatasetSchemaVersion) {
    throw std::runtime_error("dataset: unsupported schema version in " + dir.string());
  }
  DatasetSplit split;
  split.shape = cross_section_from_string(meta["shape"].get<std::string>());
  split.seed = meta["seed"].get<uint64_t>();
  split.bounds.names = meta["bounds"]["names"].get<std::vector<std::string>>();
  split.bounds.lo = meta["bounds"]["lo"].get<std::vector<double>>();
  split.bounds.hi = meta["bounds"]["hi"].get<std::vector<double>>();
  split.bounds.validate();
  split.warnings = meta["warnings"].get<std::vector<std::string>>();
  split.train = detail::split_from_csv(read_file(dir / "train.csv"), split.shape, dir / "train.csv");
  split.test = detail::split_from_csv(read_file(dir / "test.csv"), split.shape, dir / "test.csv");
  if (split.train.size() != meta["train_devices"].get<size_t>() ||
      split.test.size() != meta["test_devices"].get<size_t>()) {
    throw std::runtime_error("dataset: csv device counts disagree with metadata in " + dir.string());
  }
  // vth flags were already folded into warnings at build time
  return split;
}

// Flattened training batch: one row per sample, device-major, row-major
// (vgs outer, vds inner) inside each device, so a device's slice of any
// per-sample vector maps directly onto its 15x14 grid.
struct GridBatch {
  Eigen::MatrixXd X;            // n x d, normalized features
  Eigen::VectorXd y;            // n, log10(Ids)
  std::vector<Region> region;   // n
  int rows = 15;                // vgs axis length
  int cols = 14;                // vds axis length
  int device_count = 0;

  long samples_per_device() const { return static_cast<long>(rows) * cols; }
  long total_samples() const { return static_cast<long>(device_count) * samples_per_device(); }
};

inline GridBatch make_batch(const std::vector<IVGrid>& grids, const NormBounds& bounds) {
  GridBatch b;
  if (grids.empty()) throw std::invalid_argument("make_batch: no devices");
  b.rows = static_cast<int>(grids.front().log_ids.rows());
  b.cols = static_cast<int>(grids.front().log_ids.cols());
  b.device_count = static_cast<int>(grids.size());
  const long n = b.total_samples();
  const int d = static_cast<int>(bounds.size());
  b.X.resize(n, d);
  b.y.resize(n);
  b.region.reserve(static_cast<size_t>(n));
  long r = 0;
  for (const IVGrid& g : grids) {
    for (int i = 0; i < b.rows; ++i) {
      for (int j = 0; j < b.cols; ++j) {
        const Eigen::VectorXd x = feature_vector(g.device, g.vgs_axis[static_cast<size_t>(i)], g.vds_axis[static_cast<size_t>(j)]);
        b.X.row(r) = normalize(x, bounds).transpose();
        b.y[r] = g.log_ids(i, j);
        b.region.push_back(g.region_at(i, j));
        ++r;
      }
    }
  }
  return b;
}

}  // namespace prime
