#pragma once

#include <Eigen/Core>
#include <array>
#include <stdexcept>

#include "prime/dataset.hpp"
#include "prime/moe.hpp"

namespace prime {

// Discrete-routing baseline: a three-way region classifier in front of three
// independent regional regressors.
struct PpcNet {
  MlpSpec classifier;                          // input k+2, hidden 20-20, output 3 logits
  std::array<MlpSpec, kExpertCount> regional;  // same shape as the PRIME experts
  NormBounds bounds;
  OutputTransform out;  // shared by the regional nets

  int input_dim() const { return classifier.input_dim(); }
};

inline PpcNet init_ppc(int input_dim, const NormBounds& bounds, uint64_t seed, int hidden = kDefaultHidden) {
  PpcNet m;
  m.bounds = bounds;
  m.classifier = init_mlp({input_dim, hidden, hidden, kExpertCount}, derive_seed(seed, "classifier"));
  for (int j = 0; j < kExpertCount; ++j) {
    m.regional[j] = init_mlp({input_dim, hidden, hidden, 1}, derive_seed(seed, "regional" + std::to_string(j)));
  }
  return m;
}

// Published MNN topology: four hidden layers of 16, 32, 32, 16.
inline MlpSpec make_mnn(int input_dim, uint64_t seed) {
  return init_mlp({input_dim, 16, 32, 32, 16, 1}, derive_seed(seed, "mnn"));
}

inline MlpSpec make_plain_mlp(int input_dim, uint64_t seed, int hidden = kDefaultHidden) {
  return init_mlp({input_dim, hidden, hidden, 1}, derive_seed(seed, "mlp"));
}

// Argmax routing; exact ties resolve to the lower region index
// (Subthreshold < Linear < Saturation).
inline int ppc_route(const Eigen::Vector3d& logits) {
  int best = 0;
  for (int j = 1; j < kExpertCount; ++j) {
    if (logits[j] > logits[best]) best = j;
  }
  return best;
}

inline Prediction ppc_predict(const PpcNet& m, const Eigen::VectorXd& x_raw) {
  if (vds_of(x_raw) == 0.0) return {true, 0.0};
  const Eigen::VectorXd xn = normalize(x_raw, m.bounds);
  const int route = ppc_route(forward(m.classifier, xn));
  return {false, m.out.apply(forward(m.regional[static_cast<size_t>(route)], xn)[0])};
}

inline Prediction mlp_predict(const MlpSpec& net, const NormBounds& bounds, const Eigen::VectorXd& x_raw,
                              const OutputTransform& out = {}) {
  if (vds_of(x_raw) == 0.0) return {true, 0.0};
  return {false, out.apply(forward(net, normalize(x_raw, bounds))[0])};
}

}  // namespace prime
