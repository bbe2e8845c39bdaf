#pragma once

#include <filesystem>
#include <string>

#include "prime/io_util.hpp"
#include "prime/training.hpp"

#include <json.hpp>

namespace prime {

// Training provenance carried inside the model file.
struct ModelProvenance {
  uint64_t seed = 0;
  long steps = 0;
  double lr = 0.0;
  LossConfig loss;
  std::string dataset_hash;
  std::string shape;
};

namespace detail {

inline nlohmann::json mlp_to_json(const MlpSpec& m) {
  nlohmann::json j;
  j["layer_dims"] = m.layer_dims;
  j["activation"] = to_string(m.activation);
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (int l = 0; l < m.layer_count(); ++l) {
    std::vector<double> w;  // row-major
    w.reserve(static_cast<size_t>(m.weights[l].size()));
    for (Eigen::Index r = 0; r < m.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < m.weights[l].cols(); ++c) w.push_back(m.weights[l](r, c));
    weights.push_back(w);
    biases.push_back(std::vector<double>(m.biases[l].data(), m.biases[l].data() + m.biases[l].size()));
  }
  j["weights"] = weights;
  j["biases"] = biases;
  return j;
}

inline MlpSpec mlp_from_json(const nlohmann::json& j) {
  MlpSpec m;
  m.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  m.activation = activation_from_string(j.at("activation").get<std::string>());
  const auto& ws = j.at("weights");
  const auto& bs = j.at("biases");
  for (size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    const int rows = m.layer_dims[l + 1], cols = m.layer_dims[l];
    const auto w = ws.at(l).get<std::vector<double>>();
    const auto b = bs.at(l).get<std::vector<double>>();
    if (static_cast<int>(w.size()) != rows * cols || static_cast<int>(b.size()) != rows) {
      throw std::runtime_error("model file: weight array size does not match layer dims");
    }
    Eigen::MatrixXd wm(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) wm(r, c) = w[static_cast<size_t>(r * cols + c)];
    m.weights.push_back(std::move(wm));
    m.biases.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), rows));
  }
  m.check_consistent();
  return m;
}

inline nlohmann::json bounds_to_json(const NormBounds& b) {
  return {{"names", b.names}, {"lo", b.lo}, {"hi", b.hi}};
}

inline NormBounds bounds_from_json(const nlohmann::json& j) {
  NormBounds b;
  b.names = j.at("names").get<std::vector<std::string>>();
  b.lo = j.at("lo").get<std::vector<double>>();
  b.hi = j.at("hi").get<std::vector<double>>();
  b.validate();
  return b;
}

}  // namespace detail

inline void save_model(const TrainedModel& m, const ModelProvenance& prov, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["arch"] = to_string(m.kind);
  j["bounds"] = detail::bounds_to_json(m.bounds());
  const OutputTransform& out = m.kind == ModelKind::Prime ? m.prime->out
                               : m.kind == ModelKind::Ppc ? m.ppc->out
                                                          : m.plain->out;
  j["output_transform"] = {{"offset", out.offset}, {"scale", out.scale}};
  nlohmann::json subnets;
  switch (m.kind) {
    case ModelKind::Prime:
      for (int e = 0; e < kExpertCount; ++e) {
        subnets["expert" + std::to_string(e)] = detail::mlp_to_json(m.prime->experts[static_cast<size_t>(e)]);
      }
      subnets["gate"] = detail::mlp_to_json(m.prime->gate);
      break;
    case ModelKind::Ppc:
      subnets["classifier"] = detail::mlp_to_json(m.ppc->classifier);
      for (int r = 0; r < kExpertCount; ++r) {
        subnets["regional" + std::to_string(r)] = detail::mlp_to_json(m.ppc->regional[static_cast<size_t>(r)]);
      }
      break;
    default:
      subnets["net"] = detail::mlp_to_json(m.plain->net);
      break;
  }
  j["subnets"] = std::move(subnets);
  j["provenance"] = {{"seed", prov.seed},   {"steps", prov.steps},
                     {"lr", prov.lr},       {"loss_a", prov.loss.a},
                     {"loss_b", prov.loss.b}, {"dataset_hash", prov.dataset_hash},
                     {"shape", prov.shape}, {"tool_version", kToolVersion}};
  write_file(path, j.dump(2) + "\n");
}

inline TrainedModel load_model(const std::filesystem::path& path, ModelProvenance* prov_out = nullptr) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("model file: cannot parse " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw std::runtime_error("model file: unsupported format version in " + path.string());
    }
    TrainedModel m;
    m.kind = model_kind_from_string(j.at("arch").get<std::string>());
    const NormBounds bounds = detail::bounds_from_json(j.at("bounds"));
    OutputTransform out;
    out.offset = j.at("output_transform").at("offset").get<double>();
    out.scale = j.at("output_transform").at("scale").get<double>();
    const auto& subnets = j.at("subnets");
    switch (m.kind) {
      case ModelKind::Prime: {
        PrimeModel p;
        p.bounds = bounds;
        p.out = out;
        for (int e = 0; e < kExpertCount; ++e) {
          p.experts[static_cast<size_t>(e)] = detail::mlp_from_json(subnets.at("expert" + std::to_string(e)));
        }
        p.gate = detail::mlp_from_json(subnets.at("gate"));
        p.check_consistent();
        m.prime = std::move(p);
        break;
      }
      case ModelKind::Ppc: {
        PpcNet p;
        p.bounds = bounds;
        p.out = out;
        p.classifier = detail::mlp_from_json(subnets.at("classifier"));
        for (int r = 0; r < kExpertCount; ++r) {
          p.regional[static_cast<size_t>(r)] = detail::mlp_from_json(subnets.at("regional" + std::to_string(r)));
        }
        m.ppc = std::move(p);
        break;
      }
      default:
        m.plain = PlainNet{detail::mlp_from_json(subnets.at("net")), bounds, out};
        break;
    }
    if (prov_out) {
      const auto& p = j.at("provenance");
      prov_out->seed = p.at("seed").get<uint64_t>();
      prov_out->steps = p.at("steps").get<long>();
      prov_out->lr = p.at("lr").get<double>();
      prov_out->loss.a = p.at("loss_a").get<std::array<double, 2>>();
      prov_out->loss.b = p.at("loss_b").get<std::array<double, 2>>();
      prov_out->dataset_hash = p.at("dataset_hash").get<std::string>();
      prov_out->shape = p.at("shape").get<std::string>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("model file: missing or malformed field in " + path.string() + ": " + e.what());
  }
}

}  // namespace prime
