#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "prime/loss.hpp"

namespace prime {

struct TrainConfig {
  long steps = 5000;
  double lr = 1e-3;
  uint64_t seed = 0;
  int batch_devices = 0;  // devices per optimization step; 0 = full batch
  LossConfig loss;

  void validate() const {
    if (steps < 1) throw std::invalid_argument("TrainConfig: steps must be >= 1");
    if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (batch_devices < 0) throw std::invalid_argument("TrainConfig: batch size must be >= 0");
    loss.validate();
  }
};

struct TrainReport {
  std::vector<double> loss_history;  // one entry per optimization step
  double wall_seconds = 0.0;
  GridLossTerms final_terms;         // decomposition at the last step's batch
  LossConfig loss;
  double classifier_accuracy = -1.0;  // PPC only: held-out routing accuracy
};

}  // namespace prime
