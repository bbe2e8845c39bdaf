#pragma once

#include <Eigen/Core>
#include <array>
#include <stdexcept>

#include "prime/feature.hpp"
#include "prime/mlp.hpp"

namespace prime {

inline constexpr int kExpertCount = 3;
inline constexpr int kDefaultHidden = 20;

// Three region experts plus a softmax gate over the same normalized input.
// Experts are architecturally identical and differ only by init seed.
struct PrimeModel {
  std::array<MlpSpec, kExpertCount> experts;  // input k+2, hidden 20-20, output 1
  MlpSpec gate;                               // input k+2, hidden 20-20, output 3
  NormBounds bounds;
  OutputTransform out;  // shared by the experts; expert outputs are in y units

  int input_dim() const { return gate.input_dim(); }

  void check_consistent() const {
    gate.check_consistent();
    if (gate.output_dim() != kExpertCount) throw std::invalid_argument("PrimeModel: gate output dim must be 3");
    for (const MlpSpec& e : experts) {
      e.check_consistent();
      if (e.input_dim() != gate.input_dim()) throw std::invalid_argument("PrimeModel: expert/gate input dims differ");
      if (e.output_dim() != 1) throw std::invalid_argument("PrimeModel: expert output dim must be 1");
    }
  }
};

inline PrimeModel init_prime(int input_dim, const NormBounds& bounds, uint64_t seed, int hidden = kDefaultHidden) {
  PrimeModel m;
  m.bounds = bounds;
  for (int j = 0; j < kExpertCount; ++j) {
    m.experts[j] = init_mlp({input_dim, hidden, hidden, 1}, derive_seed(seed, "expert" + std::to_string(j)));
  }
  m.gate = init_mlp({input_dim, hidden, hidden, kExpertCount}, derive_seed(seed, "gate"));
  return m;
}

// Max-subtracted softmax; exact simplex output for finite input.
inline Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
  if (!v.allFinite()) throw std::invalid_argument("softmax: input must be finite");
  Eigen::VectorXd e = (v.array() - v.maxCoeff()).exp();
  return e / e.sum();
}

struct GateOutput {
  Eigen::Vector3d p;
};

inline GateOutput gate_weights(const PrimeModel& m, const Eigen::VectorXd& x_norm) {
  return {softmax(forward(m.gate, x_norm))};
}

// Prediction in log10(A), or the exact-zero-current marker for vds = 0.
struct Prediction {
  bool zero_current = false;
  double log10_ids = 0.0;
};

inline double vds_of(const Eigen::VectorXd& x_raw) { return x_raw[x_raw.size() - 1]; }

// x_raw is the physical-unit feature vector [z_1..z_k, vgs, vds]. The zero
// rule fires before any network evaluation.
inline Prediction prime_predict(const PrimeModel& m, const Eigen::VectorXd& x_raw) {
  if (vds_of(x_raw) == 0.0) return {true, 0.0};
  const Eigen::VectorXd xn = normalize(x_raw, m.bounds);
  const Eigen::VectorXd p = softmax(forward(m.gate, xn));
  double y = 0.0;
  for (int j = 0; j < kExpertCount; ++j) {
    y += p[j] * m.out.apply(forward(m.experts[j], xn)[0]);
  }
  return {false, y};
}

// Training-time forward over pre-normalized rows, keeping every subnetwork
// cache.
struct PrimeBatchCache {
  std::array<BatchCache, kExpertCount> expert_caches;
  BatchCache gate_cache;
  Eigen::MatrixXd expert_out;  // n x 3, in y units (output transform applied)
  Eigen::MatrixXd p;           // n x 3, softmax rows
  Eigen::VectorXd yhat;        // n
};

inline Eigen::VectorXd prime_forward_batch(const PrimeModel& m, const Eigen::MatrixXd& Xn, PrimeBatchCache& cache) {
  const Eigen::Index n = Xn.rows();
  cache.expert_out.resize(n, kExpertCount);
  for (int j = 0; j < kExpertCount; ++j) {
    cache.expert_out.col(j) =
        (forward_batch(m.experts[j], Xn, &cache.expert_caches[j]).array() * m.out.scale + m.out.offset).matrix();
  }
  Eigen::MatrixXd logits = forward_batch(m.gate, Xn, &cache.gate_cache);
  cache.p.resize(n, kExpertCount);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Vector3d row = logits.row(i).transpose();
    Eigen::Vector3d e = (row.array() - row.maxCoeff()).exp();
    cache.p.row(i) = (e / e.sum()).transpose();
  }
  cache.yhat = (cache.p.array() * cache.expert_out.array()).rowwise().sum();
  return cache.yhat;
}

struct PrimeGradients {
  std::array<Gradients, kExpertCount> experts;
  Gradients gate;
};

inline PrimeGradients make_zero_prime_gradients(const PrimeModel& m) {
  PrimeGradients g;
  for (int j = 0; j < kExpertCount; ++j) g.experts[j] = make_zero_gradients(m.experts[j]);
  g.gate = make_zero_gradients(m.gate);
  return g;
}

// Backward through the convex combination:
//   d yhat / d expert_j = p_j,   d yhat / d gate_logit_j = p_j (y_j - yhat).
inline void prime_backward_batch(const PrimeModel& m, const PrimeBatchCache& cache, const Eigen::VectorXd& dyhat,
                                 PrimeGradients& out) {
  const Eigen::Index n = dyhat.size();
  if (cache.yhat.size() != n) throw std::invalid_argument("prime_backward_batch: cache/dyhat size mismatch");
  for (int j = 0; j < kExpertCount; ++j) {
    // the output transform contributes a factor of scale on the expert path
    Eigen::MatrixXd d = (cache.p.col(j).array() * dyhat.array() * m.out.scale).matrix();
    backward_batch(m.experts[j], cache.expert_caches[j], d, out.experts[j]);
  }
  Eigen::MatrixXd dlogits(n, kExpertCount);
  for (int j = 0; j < kExpertCount; ++j) {
    dlogits.col(j) =
        (cache.p.col(j).array() * (cache.expert_out.col(j).array() - cache.yhat.array()) * dyhat.array()).matrix();
  }
  backward_batch(m.gate, cache.gate_cache, dlogits, out.gate);
}

}  // namespace prime
