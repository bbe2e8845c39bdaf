#include <gtest/gtest.h>

#include <Eigen/Core>
#include <cmath>

#include "prime/moe.hpp"
#include "prime/rng.hpp"

using namespace prime;

namespace {

NormBounds unit_bounds(int n) {
  NormBounds b;
  for (int i = 0; i < n; ++i) {
    b.names.push_back("f" + std::to_string(i));
    b.lo.push_back(0.0);
    b.hi.push_back(1.0);
  }
  return b;
}

Eigen::VectorXd random_vector(Rng& rng, int n, double lo = 0.0, double hi = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

void zero_net(MlpSpec& m) {
  for (auto& w : m.weights) w.setZero();
  for (auto& b : m.biases) b.setZero();
}

// expert that outputs a constant regardless of input
void constant_net(MlpSpec& m, double value) {
  zero_net(m);
  m.biases.back()[0] = value;
}

}  // namespace

TEST(Softmax, UniformForEqualLogits) {
  Eigen::VectorXd v(3);
  v << 0.0, 0.0, 0.0;
  const Eigen::VectorXd p = softmax(v);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(p[i], 1.0 / 3.0);
}

TEST(Softmax, HandEvaluatedValues) {
  Eigen::VectorXd v(3);
  v << 1.0, 2.0, 3.0;
  const Eigen::VectorXd p = softmax(v);
  EXPECT_NEAR(p[0], 0.09003057317038046, 1e-15);
  EXPECT_NEAR(p[1], 0.24472847105479767, 1e-15);
  EXPECT_NEAR(p[2], 0.66524095577482183, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  Eigen::VectorXd a(3), b(3);
  a << 100.0, 101.0, 102.0;
  b << 0.0, 1.0, 2.0;
  EXPECT_LT((softmax(a) - softmax(b)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Softmax, RejectsNonFinite) {
  Eigen::VectorXd v(3);
  v << 0.0, std::numeric_limits<double>::infinity(), 1.0;
  EXPECT_THROW(softmax(v), std::invalid_argument);
}

TEST(GateWeights, ZeroInitializedGateIsUniform) {
  PrimeModel m = init_prime(4, unit_bounds(4), 0);
  zero_net(m.gate);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const GateOutput g = gate_weights(m, random_vector(rng, 4));
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(g.p[j], 1.0 / 3.0);
  }
}

TEST(GateWeights, SimplexInvariantOverRandomInputs) {
  const PrimeModel m = init_prime(5, unit_bounds(5), 7);
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const GateOutput g = gate_weights(m, random_vector(rng, 5, -2.0, 2.0));
    double sum = 0.0;
    for (int j = 0; j < 3; ++j) {
      EXPECT_GE(g.p[j], 0.0);
      EXPECT_LE(g.p[j], 1.0);
      sum += g.p[j];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Predict, ZeroVdsBypassesNetworks) {
  const PrimeModel m = init_prime(4, unit_bounds(4), 3);
  // wrong feature length would make normalize throw if the nets were hit
  Eigen::VectorXd x(2);
  x << 0.5, 0.0;
  const Prediction p = prime_predict(m, x);
  EXPECT_TRUE(p.zero_current);
}

TEST(Predict, SaturatedGateSelectsSingleExpert) {
  PrimeModel m = init_prime(3, unit_bounds(3), 4);
  zero_net(m.gate);
  m.gate.biases.back()[0] = 1000.0;  // p = [1, 0, 0] exactly
  Rng rng(5);
  const Eigen::VectorXd x = random_vector(rng, 3, 0.1, 0.9);
  const Prediction p = prime_predict(m, x);
  const Eigen::VectorXd xn = normalize(x, m.bounds);
  EXPECT_EQ(p.log10_ids, forward(m.experts[0], xn)[0]);
}

TEST(Predict, UniformGateAveragesExperts) {
  PrimeModel m = init_prime(3, unit_bounds(3), 6);
  zero_net(m.gate);
  constant_net(m.experts[0], 3.0);
  constant_net(m.experts[1], 6.0);
  constant_net(m.experts[2], 9.0);
  Rng rng(7);
  const Prediction p = prime_predict(m, random_vector(rng, 3, 0.1, 0.9));
  EXPECT_NEAR(p.log10_ids, 6.0, 1e-12);
}

TEST(Predict, ConvexCombinationStaysInsideExpertRange) {
  const PrimeModel m = init_prime(4, unit_bounds(4), 8);
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd x = random_vector(rng, 4);
    const Eigen::VectorXd xn = normalize(x, m.bounds);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int j = 0; j < 3; ++j) {
      const double y = forward(m.experts[j], xn)[0];
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
    const Prediction p = prime_predict(m, x);
    EXPECT_GE(p.log10_ids, lo - 1e-12);
    EXPECT_LE(p.log10_ids, hi + 1e-12);
  }
}

TEST(Predict, PermutationEquivariant) {
  const PrimeModel m = init_prime(3, unit_bounds(3), 10);
  PrimeModel permuted = m;
  // rotate experts 0->1->2->0 together with the gate output rows
  permuted.experts[1] = m.experts[0];
  permuted.experts[2] = m.experts[1];
  permuted.experts[0] = m.experts[2];
  Eigen::MatrixXd& w = permuted.gate.weights.back();
  Eigen::VectorXd& b = permuted.gate.biases.back();
  const Eigen::MatrixXd w0 = w;
  const Eigen::VectorXd b0 = b;
  w.row(1) = w0.row(0);
  w.row(2) = w0.row(1);
  w.row(0) = w0.row(2);
  b[1] = b0[0];
  b[2] = b0[1];
  b[0] = b0[2];
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd x = random_vector(rng, 3);
    EXPECT_NEAR(prime_predict(m, x).log10_ids, prime_predict(permuted, x).log10_ids, 1e-12);
  }
}

TEST(ForwardTraining, ConsistentWithPredict) {
  const PrimeModel m = init_prime(4, unit_bounds(4), 12);
  Rng rng(13);
  Eigen::MatrixXd X(20, 4);
  for (int i = 0; i < 20; ++i) X.row(i) = random_vector(rng, 4).transpose();
  PrimeBatchCache cache;
  const Eigen::VectorXd yhat = prime_forward_batch(m, X, cache);
  for (int i = 0; i < 20; ++i) {
    // reconstruct the raw input whose normalization is this row
    Eigen::VectorXd x(4);
    for (int k = 0; k < 4; ++k) x[k] = X(i, k);  // unit bounds: raw == normalized
    EXPECT_NEAR(yhat[i], prime_predict(m, x).log10_ids, 1e-12);
    // intermediates recombine to yhat
    double recombined = 0.0;
    for (int j = 0; j < 3; ++j) recombined += cache.p(i, j) * cache.expert_out(i, j);
    EXPECT_NEAR(recombined, yhat[i], 1e-12);
  }
}

TEST(ForwardTraining, CombinationBackwardIdentities) {
  const PrimeModel m = init_prime(3, unit_bounds(3), 14);
  Rng rng(15);
  const Eigen::VectorXd x = random_vector(rng, 3);
  Eigen::MatrixXd X = x.transpose();
  PrimeBatchCache cache;
  const Eigen::VectorXd yhat = prime_forward_batch(m, X, cache);
  // d yhat / d expert_j = p_j, checked with a perturbed constant shift
  const double h = 1e-6;
  for (int j = 0; j < 3; ++j) {
    PrimeModel up = m;
    up.experts[static_cast<size_t>(j)].biases.back()[0] += h;
    PrimeModel dn = m;
    dn.experts[static_cast<size_t>(j)].biases.back()[0] -= h;
    PrimeBatchCache cu, cd;
    const double fd = (prime_forward_batch(up, X, cu)[0] - prime_forward_batch(dn, X, cd)[0]) / (2 * h);
    EXPECT_NEAR(fd, cache.p(0, j), 1e-8);
  }
  // d yhat / d gate_logit_j = p_j (y_j - yhat), via the gate output bias
  for (int j = 0; j < 3; ++j) {
    PrimeModel up = m;
    up.gate.biases.back()[j] += h;
    PrimeModel dn = m;
    dn.gate.biases.back()[j] -= h;
    PrimeBatchCache cu, cd;
    const double fd = (prime_forward_batch(up, X, cu)[0] - prime_forward_batch(dn, X, cd)[0]) / (2 * h);
    EXPECT_NEAR(fd, cache.p(0, j) * (cache.expert_out(0, j) - yhat[0]), 1e-8);
  }
}

TEST(ForwardTraining, FullModelGradientMatchesFiniteDifferences) {
  // shrunken model: hidden width 4; scalar loss sum((yhat - target)^2)
  PrimeModel m = init_prime(3, unit_bounds(3), 16, 4);
  Rng rng(17);
  Eigen::MatrixXd X(6, 3);
  for (int i = 0; i < 6; ++i) X.row(i) = random_vector(rng, 3).transpose();
  const Eigen::VectorXd target = random_vector(rng, 6, -2.0, 2.0);
  PrimeBatchCache cache;
  const Eigen::VectorXd yhat = prime_forward_batch(m, X, cache);
  PrimeGradients g = make_zero_prime_gradients(m);
  prime_backward_batch(m, cache, 2.0 * (yhat - target), g);

  auto loss_of = [&](const PrimeModel& probe) {
    PrimeBatchCache c;
    return (prime_forward_batch(probe, X, c) - target).squaredNorm();
  };
  const double h = 1e-5;
  auto check_net = [&](MlpSpec PrimeModel::*gate_ptr, int expert_index, const Gradients& grads) {
    MlpSpec& net = expert_index < 0 ? m.*gate_ptr : m.experts[static_cast<size_t>(expert_index)];
    for (int l = 0; l < net.layer_count(); ++l) {
      for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < net.weights[l].cols(); ++c) {
          const double keep = net.weights[l](r, c);
          net.weights[l](r, c) = keep + h;
          const double up = loss_of(m);
          net.weights[l](r, c) = keep - h;
          const double dn = loss_of(m);
          net.weights[l](r, c) = keep;
          const double fd = (up - dn) / (2 * h);
          EXPECT_NEAR(grads.dw[l](r, c), fd, 1e-6 * std::max(1.0, std::abs(fd)));
        }
      }
    }
  };
  for (int j = 0; j < 3; ++j) check_net(&PrimeModel::gate, j, g.experts[static_cast<size_t>(j)]);
  check_net(&PrimeModel::gate, -1, g.gate);
}

TEST(InitPrime, ExpertsDifferOnlyByInitSeed) {
  const PrimeModel m = init_prime(4, unit_bounds(4), 18);
  for (int j = 0; j < 3; ++j) {
    EXPECT_EQ(m.experts[static_cast<size_t>(j)].layer_dims, (std::vector<int>{4, 20, 20, 1}));
  }
  EXPECT_FALSE(m.experts[0].weights[0] == m.experts[1].weights[0]);
  m.check_consistent();
}
