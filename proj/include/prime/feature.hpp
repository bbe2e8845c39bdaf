#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

#include "prime/device.hpp"

namespace prime {

// Per-feature min/max used for the (x - min)/(max - min) input scaling.
// Bounds come from the parameter value lists, so normalized training
// features always land in [0, 1]; out-of-range queries are not clamped.
struct NormBounds {
  std::vector<std::string> names;
  std::vector<double> lo;
  std::vector<double> hi;

  size_t size() const { return names.size(); }

  void validate() const {
    if (names.size() != lo.size() || names.size() != hi.size()) {
      throw std::invalid_argument("NormBounds: mismatched field lengths");
    }
    for (size_t i = 0; i < names.size(); ++i) {
      if (!(hi[i] > lo[i])) {
        throw std::invalid_argument("NormBounds: degenerate bound for feature " + names[i]);
      }
    }
  }
};

inline Eigen::VectorXd normalize(const Eigen::VectorXd& x, const NormBounds& b) {
  if (static_cast<size_t>(x.size()) != b.size()) {
    throw std::invalid_argument("normalize: feature vector length does not match bounds");
  }
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - b.lo[i]) / (b.hi[i] - b.lo[i]);
  }
  return out;
}

// Feature layout per shape: [lg, r | h, w, tox, nsd, eps_ox, vgs, vds].
inline std::vector<std::string> feature_names(CrossSectionKind kind) {
  if (kind == CrossSectionKind::Rectangular) {
    return {"lg", "h", "w", "tox", "nsd", "eps_ox", "vgs", "vds"};
  }
  return {"lg", "r", "tox", "nsd", "eps_ox", "vgs", "vds"};
}

inline int feature_count(CrossSectionKind kind) {
  return kind == CrossSectionKind::Rectangular ? 8 : 7;
}

inline Eigen::VectorXd feature_vector(const DeviceParams& d, double vgs, double vds) {
  Eigen::VectorXd x(feature_count(d.shape.kind));
  int i = 0;
  x[i++] = d.lg;
  if (d.shape.kind == CrossSectionKind::Rectangular) {
    x[i++] = d.shape.h;
    x[i++] = d.shape.w;
  } else {
    x[i++] = d.shape.r;
  }
  x[i++] = d.tox;
  x[i++] = d.nsd;
  x[i++] = d.eps_ox;
  x[i++] = vgs;
  x[i++] = vds;
  return x;
}

}  // namespace prime
