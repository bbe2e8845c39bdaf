#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "prime/rng.hpp"

namespace prime {

enum class Activation { Tanh };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
  }
  throw std::logic_error("unknown activation");
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + s);
}

// Fixed affine applied to a regression head's output: y = offset + scale * net(x).
// Fitted once from the training targets so the net works on a standardized
// scale; identity by default. Stored with the model.
struct OutputTransform {
  double offset = 0.0;
  double scale = 1.0;

  double apply(double raw) const { return offset + scale * raw; }
};

inline OutputTransform fit_output_transform(const Eigen::VectorXd& y) {
  OutputTransform t;
  t.offset = y.mean();
  const double var = (y.array() - t.offset).square().mean();
  t.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  return t;
}

// Dense MLP. weights[l] maps layer_dims[l] -> layer_dims[l+1]; the hidden
// layers apply the activation, the output layer is affine.
struct MlpSpec {
  std::vector<int> layer_dims;
  std::vector<Eigen::MatrixXd> weights;  // [l]: layer_dims[l+1] x layer_dims[l]
  std::vector<Eigen::VectorXd> biases;   // [l]: layer_dims[l+1]
  Activation activation = Activation::Tanh;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int layer_count() const { return static_cast<int>(weights.size()); }

  long parameter_count() const {
    long n = 0;
    for (size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  void check_consistent() const {
    if (layer_dims.size() < 2) throw std::invalid_argument("MlpSpec: need at least input and output dims");
    if (weights.size() + 1 != layer_dims.size() || biases.size() != weights.size()) {
      throw std::invalid_argument("MlpSpec: layer count mismatch");
    }
    for (size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != layer_dims[l + 1] || weights[l].cols() != layer_dims[l] ||
          biases[l].size() != layer_dims[l + 1]) {
        throw std::invalid_argument("MlpSpec: dimension chain broken at layer " + std::to_string(l));
      }
      if (!weights[l].allFinite() || !biases[l].allFinite()) {
        throw std::invalid_argument("MlpSpec: non-finite parameters at layer " + std::to_string(l));
      }
    }
  }
};

// Glorot-uniform weights, zero biases; deterministic per seed.
inline MlpSpec init_mlp(const std::vector<int>& layer_dims, uint64_t seed) {
  for (int d : layer_dims) {
    if (d < 1) throw std::invalid_argument("init_mlp: every layer dim must be >= 1");
  }
  if (layer_dims.size() < 2) throw std::invalid_argument("init_mlp: need at least two dims");
  MlpSpec spec;
  spec.layer_dims = layer_dims;
  Rng rng(seed);
  for (size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i) {
      for (int j = 0; j < fan_in; ++j) {
        w(i, j) = rng.uniform(-limit, limit);
      }
    }
    spec.weights.push_back(std::move(w));
    spec.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return spec;
}

// Post-activation values per layer; act[0] is the input, act.back() the output.
struct ForwardCache {
  std::vector<Eigen::VectorXd> act;
};

inline Eigen::VectorXd forward(const MlpSpec& spec, const Eigen::VectorXd& x, ForwardCache* cache = nullptr) {
  if (x.size() != spec.input_dim()) {
    throw std::invalid_argument("forward: input length " + std::to_string(x.size()) +
                                " != " + std::to_string(spec.input_dim()));
  }
  Eigen::VectorXd a = x;
  if (cache) {
    cache->act.clear();
    cache->act.push_back(a);
  }
  const int L = spec.layer_count();
  for (int l = 0; l < L; ++l) {
    Eigen::VectorXd z = spec.weights[l] * a + spec.biases[l];
    a = (l + 1 < L) ? z.array().tanh().matrix() : z;
    if (cache) cache->act.push_back(a);
  }
  return a;
}

// Batched variant: rows of X are samples.
struct BatchCache {
  std::vector<Eigen::MatrixXd> act;
};

inline Eigen::MatrixXd forward_batch(const MlpSpec& spec, const Eigen::MatrixXd& X, BatchCache* cache = nullptr) {
  if (X.cols() != spec.input_dim()) {
    throw std::invalid_argument("forward_batch: input width " + std::to_string(X.cols()) +
                                " != " + std::to_string(spec.input_dim()));
  }
  Eigen::MatrixXd a = X;
  if (cache) {
    cache->act.clear();
    cache->act.push_back(a);
  }
  const int L = spec.layer_count();
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd z = (a * spec.weights[l].transpose()).rowwise() + spec.biases[l].transpose();
    a = (l + 1 < L) ? z.array().tanh().matrix() : z;
    if (cache) cache->act.push_back(a);
  }
  return a;
}

struct Gradients {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;
};

inline Gradients make_zero_gradients(const MlpSpec& spec) {
  Gradients g;
  for (int l = 0; l < spec.layer_count(); ++l) {
    g.dw.push_back(Eigen::MatrixXd::Zero(spec.weights[l].rows(), spec.weights[l].cols()));
    g.db.push_back(Eigen::VectorXd::Zero(spec.biases[l].size()));
  }
  return g;
}

// Reverse-mode partials of a scalar loss given dL/doutput. Returns dL/dinput.
inline Eigen::VectorXd backward(const MlpSpec& spec, const ForwardCache& cache,
                                const Eigen::VectorXd& dL_dy, Gradients& out) {
  const int L = spec.layer_count();
  if (static_cast<int>(cache.act.size()) != L + 1) throw std::invalid_argument("backward: cache does not match spec");
  if (dL_dy.size() != spec.output_dim()) throw std::invalid_argument("backward: dL_dy length mismatch");
  if (static_cast<int>(out.dw.size()) != L) out = make_zero_gradients(spec);
  Eigen::VectorXd delta = dL_dy;
  for (int l = L - 1; l >= 0; --l) {
    if (l + 1 < L) {
      // tanh'(z) = 1 - a^2 with a the cached post-activation
      delta = (delta.array() * (1.0 - cache.act[l + 1].array().square())).matrix();
    }
    out.dw[l] += delta * cache.act[l].transpose();
    out.db[l] += delta;
    delta = (spec.weights[l].transpose() * delta).eval();
  }
  return delta;
}

// Batched backward; accumulates parameter gradients summed over samples and
// returns dL/dX.
inline Eigen::MatrixXd backward_batch(const MlpSpec& spec, const BatchCache& cache,
                                      const Eigen::MatrixXd& dL_dY, Gradients& out) {
  const int L = spec.layer_count();
  if (static_cast<int>(cache.act.size()) != L + 1) throw std::invalid_argument("backward_batch: cache does not match spec");
  if (dL_dY.cols() != spec.output_dim() || dL_dY.rows() != cache.act[0].rows()) {
    throw std::invalid_argument("backward_batch: dL_dY shape mismatch");
  }
  if (static_cast<int>(out.dw.size()) != L) out = make_zero_gradients(spec);
  Eigen::MatrixXd delta = dL_dY;
  for (int l = L - 1; l >= 0; --l) {
    if (l + 1 < L) {
      delta = (delta.array() * (1.0 - cache.act[l + 1].array().square())).matrix();
    }
    out.dw[l] += delta.transpose() * cache.act[l];
    out.db[l] += delta.colwise().sum().transpose();
    delta = (delta * spec.weights[l]).eval();
  }
  return delta;
}

struct AdamState {
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
};

inline AdamState make_adam_state(const MlpSpec& spec, double lr = 1e-3) {
  AdamState s;
  s.lr = lr;
  for (int l = 0; l < spec.layer_count(); ++l) {
    s.mw.push_back(Eigen::MatrixXd::Zero(spec.weights[l].rows(), spec.weights[l].cols()));
    s.vw.push_back(Eigen::MatrixXd::Zero(spec.weights[l].rows(), spec.weights[l].cols()));
    s.mb.push_back(Eigen::VectorXd::Zero(spec.biases[l].size()));
    s.vb.push_back(Eigen::VectorXd::Zero(spec.biases[l].size()));
  }
  return s;
}

// Bias-corrected Adam update. `name` identifies the subnetwork in error
// messages when a non-finite gradient is hit.
inline void adam_step(MlpSpec& spec, AdamState& state, const Gradients& g, const std::string& name = "mlp") {
  if (state.mw.size() != spec.weights.size() || g.dw.size() != spec.weights.size()) {
    throw std::invalid_argument("adam_step: state/gradient shape mismatch for " + name);
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t l = 0; l < spec.weights.size(); ++l) {
    if (!g.dw[l].allFinite() || !g.db[l].allFinite()) {
      throw std::runtime_error("adam_step: non-finite gradient at " + name + "/layer" + std::to_string(l));
    }
    state.mw[l] = state.beta1 * state.mw[l] + (1.0 - state.beta1) * g.dw[l];
    state.vw[l] = state.beta2 * state.vw[l] + (1.0 - state.beta2) * g.dw[l].array().square().matrix();
    state.mb[l] = state.beta1 * state.mb[l] + (1.0 - state.beta1) * g.db[l];
    state.vb[l] = state.beta2 * state.vb[l] + (1.0 - state.beta2) * g.db[l].array().square().matrix();
    spec.weights[l].array() -=
        state.lr * (state.mw[l].array() / c1) / ((state.vw[l].array() / c2).sqrt() + state.epsilon);
    spec.biases[l].array() -=
        state.lr * (state.mb[l].array() / c1) / ((state.vb[l].array() / c2).sqrt() + state.epsilon);
  }
}

}  // namespace prime
