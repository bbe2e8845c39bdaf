#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace prime {

// Coefficients of the derivative penalty: a[m-1] weights the order-m error
// along vds, b[m-1] the order-m error along vgs. Defaults sit at the middle
// of the recommended 1e-4..1e-3 window.
struct LossConfig {
  std::array<double, 2> a{5e-4, 5e-4};
  std::array<double, 2> b{5e-4, 5e-4};

  void validate() const {
    for (double v : a)
      if (v < 0.0) throw std::invalid_argument("LossConfig: a coefficients must be >= 0");
    for (double v : b)
      if (v < 0.0) throw std::invalid_argument("LossConfig: b coefficients must be >= 0");
  }
  bool zero() const { return a[0] == 0.0 && a[1] == 0.0 && b[0] == 0.0 && b[1] == 0.0; }
};

namespace detail {

// Derivative of f sampled on a uniform axis, written to out (strided).
// Order 1: central interior, second-order one-sided edges.
// Order 2: 3-point interior, one-sided 3-point edges.
template <typename Get, typename Put>
void fd_apply(int n, double step, int order, Get f, Put out) {
  if (n < 3) throw std::invalid_argument("fd_derivative: need at least 3 samples");
  if (order == 1) {
    const double inv2h = 1.0 / (2.0 * step);
    out(0, (-3.0 * f(0) + 4.0 * f(1) - f(2)) * inv2h);
    for (int i = 1; i + 1 < n; ++i) out(i, (f(i + 1) - f(i - 1)) * inv2h);
    out(n - 1, (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) * inv2h);
  } else if (order == 2) {
    const double invh2 = 1.0 / (step * step);
    out(0, (f(0) - 2.0 * f(1) + f(2)) * invh2);
    for (int i = 1; i + 1 < n; ++i) out(i, (f(i - 1) - 2.0 * f(i) + f(i + 1)) * invh2);
    out(n - 1, (f(n - 1) - 2.0 * f(n - 2) + f(n - 3)) * invh2);
  } else {
    throw std::invalid_argument("fd_derivative: order must be 1 or 2");
  }
}

// Adjoint of fd_apply: given weights g on the derivative outputs, adds the
// transposed stencil application to acc. The stencils are linear, so this is
// exact.
template <typename GetG, typename Acc>
void fd_adjoint(int n, double step, int order, GetG g, Acc acc) {
  if (order == 1) {
    const double inv2h = 1.0 / (2.0 * step);
    acc(0, -3.0 * inv2h * g(0));
    acc(1, 4.0 * inv2h * g(0));
    acc(2, -inv2h * g(0));
    for (int i = 1; i + 1 < n; ++i) {
      acc(i + 1, inv2h * g(i));
      acc(i - 1, -inv2h * g(i));
    }
    acc(n - 1, 3.0 * inv2h * g(n - 1));
    acc(n - 2, -4.0 * inv2h * g(n - 1));
    acc(n - 3, inv2h * g(n - 1));
  } else {
    const double invh2 = 1.0 / (step * step);
    acc(0, invh2 * g(0));
    acc(1, -2.0 * invh2 * g(0));
    acc(2, invh2 * g(0));
    for (int i = 1; i + 1 < n; ++i) {
      acc(i - 1, invh2 * g(i));
      acc(i, -2.0 * invh2 * g(i));
      acc(i + 1, invh2 * g(i));
    }
    acc(n - 1, invh2 * g(n - 1));
    acc(n - 2, -2.0 * invh2 * g(n - 1));
    acc(n - 3, invh2 * g(n - 1));
  }
}

}  // namespace detail

inline std::vector<double> fd_derivative(std::span<const double> values, int order, double step) {
  if (step <= 0.0) throw std::invalid_argument("fd_derivative: step must be > 0");
  std::vector<double> out(values.size());
  detail::fd_apply(
      static_cast<int>(values.size()), step, order, [&](int i) { return values[static_cast<size_t>(i)]; },
      [&](int i, double v) { out[static_cast<size_t>(i)] = v; });
  return out;
}

// Grid convention: rows follow the vgs axis, columns the vds axis; both axes
// are uniformly spaced.
struct GridLossTerms {
  double value = 0.0;                  // sum of squared value errors
  std::array<double, 2> dvds{0., 0.};  // sums of squared order-m vds-derivative errors (unweighted)
  std::array<double, 2> dvgs{0., 0.};
  long count = 0;  // samples contributing to the mean

  double weighted_sum(const LossConfig& cfg) const {
    double s = value;
    for (int m = 0; m < 2; ++m) s += cfg.a[m] * dvds[m] + cfg.b[m] * dvgs[m];
    return s;
  }
};

using GridMask = std::vector<uint8_t>;  // row-major, same layout as the grid; empty = all on

namespace detail {

inline bool mask_on(const GridMask* mask, Eigen::Index r, Eigen::Index c, Eigen::Index cols) {
  return mask == nullptr || (*mask)[static_cast<size_t>(r * cols + c)] != 0;
}

}  // namespace detail

// Accumulates the per-sample loss bracket over one device grid. With a mask,
// only the masked samples contribute terms (derivative stencils still read
// the whole grid).
template <typename PredT, typename TargT>
GridLossTerms grid_loss_terms(const Eigen::MatrixBase<PredT>& pred, const Eigen::MatrixBase<TargT>& target,
                              double vgs_step, double vds_step, const GridMask* mask = nullptr) {
  const Eigen::Index R = pred.rows(), C = pred.cols();
  if (target.rows() != R || target.cols() != C) throw std::invalid_argument("grid_loss_terms: shape mismatch");
  if (R < 3 || C < 3) throw std::invalid_argument("grid_loss_terms: grid must be at least 3x3");
  if (mask && static_cast<Eigen::Index>(mask->size()) != R * C) {
    throw std::invalid_argument("grid_loss_terms: mask size mismatch");
  }
  Eigen::MatrixXd diff = pred - target;
  if (!diff.allFinite()) {
    for (Eigen::Index i = 0; i < R; ++i)
      for (Eigen::Index j = 0; j < C; ++j)
        if (!std::isfinite(diff(i, j)))
          throw std::runtime_error("loss: non-finite entry at grid point (" + std::to_string(i) + "," +
                                   std::to_string(j) + ")");
  }
  GridLossTerms t;
  for (Eigen::Index i = 0; i < R; ++i) {
    for (Eigen::Index j = 0; j < C; ++j) {
      if (detail::mask_on(mask, i, j, C)) {
        t.value += diff(i, j) * diff(i, j);
        ++t.count;
      }
    }
  }
  std::vector<double> buf(static_cast<size_t>(std::max(R, C)));
  for (int m = 1; m <= 2; ++m) {
    // along vds: each row
    for (Eigen::Index i = 0; i < R; ++i) {
      detail::fd_apply(
          static_cast<int>(C), vds_step, m, [&](int j) { return diff(i, j); },
          [&](int j, double v) { buf[static_cast<size_t>(j)] = v; });
      for (Eigen::Index j = 0; j < C; ++j) {
        if (detail::mask_on(mask, i, j, C)) t.dvds[m - 1] += buf[static_cast<size_t>(j)] * buf[static_cast<size_t>(j)];
      }
    }
    // along vgs: each column
    for (Eigen::Index j = 0; j < C; ++j) {
      detail::fd_apply(
          static_cast<int>(R), vgs_step, m, [&](int i) { return diff(i, j); },
          [&](int i, double v) { buf[static_cast<size_t>(i)] = v; });
      for (Eigen::Index i = 0; i < R; ++i) {
        if (detail::mask_on(mask, i, j, C)) t.dvgs[m - 1] += buf[static_cast<size_t>(i)] * buf[static_cast<size_t>(i)];
      }
    }
  }
  return t;
}

// Mean over the grid of the squared value error plus weighted squared
// derivative errors, derivatives taken with the shared fd stencils.
template <typename PredT, typename TargT>
double loss_eval(const Eigen::MatrixBase<PredT>& pred, const Eigen::MatrixBase<TargT>& target, const LossConfig& cfg,
                 double vgs_step = 0.05, double vds_step = 0.05) {
  cfg.validate();
  GridLossTerms t = grid_loss_terms(pred, target, vgs_step, vds_step);
  return t.weighted_sum(cfg) / static_cast<double>(t.count);
}

// Adds d(loss)/d(pred) to grad, where the loss is the weighted bracket sum
// over this grid scaled by 2*inv_n. For a standalone grid inv_n = 1/count;
// multi-device batches pass 1/(total sample count).
template <typename PredT, typename TargT>
void loss_backward_accum(const Eigen::MatrixBase<PredT>& pred, const Eigen::MatrixBase<TargT>& target,
                         const LossConfig& cfg, double inv_n, Eigen::Ref<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> grad,
                         double vgs_step = 0.05, double vds_step = 0.05, const GridMask* mask = nullptr) {
  const Eigen::Index R = pred.rows(), C = pred.cols();
  if (target.rows() != R || target.cols() != C || grad.rows() != R || grad.cols() != C) {
    throw std::invalid_argument("loss_backward: shape mismatch");
  }
  if (R < 3 || C < 3) throw std::invalid_argument("loss_backward: grid must be at least 3x3");
  Eigen::MatrixXd diff = pred - target;
  const double scale = 2.0 * inv_n;
  for (Eigen::Index i = 0; i < R; ++i) {
    for (Eigen::Index j = 0; j < C; ++j) {
      if (detail::mask_on(mask, i, j, C)) grad(i, j) += scale * diff(i, j);
    }
  }
  std::vector<double> buf(static_cast<size_t>(std::max(R, C)));
  for (int m = 1; m <= 2; ++m) {
    const double ca = scale * cfg.a[m - 1];
    if (ca != 0.0) {
      for (Eigen::Index i = 0; i < R; ++i) {
        detail::fd_apply(
            static_cast<int>(C), vds_step, m, [&](int j) { return diff(i, j); },
            [&](int j, double v) {
              buf[static_cast<size_t>(j)] = detail::mask_on(mask, i, j, C) ? v : 0.0;
            });
        detail::fd_adjoint(
            static_cast<int>(C), vds_step, m, [&](int j) { return buf[static_cast<size_t>(j)]; },
            [&](int j, double v) { grad(i, j) += ca * v; });
      }
    }
    const double cb = scale * cfg.b[m - 1];
    if (cb != 0.0) {
      for (Eigen::Index j = 0; j < C; ++j) {
        detail::fd_apply(
            static_cast<int>(R), vgs_step, m, [&](int i) { return diff(i, j); },
            [&](int i, double v) {
              buf[static_cast<size_t>(i)] = detail::mask_on(mask, i, j, C) ? v : 0.0;
            });
        detail::fd_adjoint(
            static_cast<int>(R), vgs_step, m, [&](int i) { return buf[static_cast<size_t>(i)]; },
            [&](int i, double v) { grad(i, j) += cb * v; });
      }
    }
  }
}

template <typename PredT, typename TargT>
Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> loss_backward(
    const Eigen::MatrixBase<PredT>& pred, const Eigen::MatrixBase<TargT>& target, const LossConfig& cfg,
    double vgs_step = 0.05, double vds_step = 0.05) {
  cfg.validate();
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> grad =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(pred.rows(), pred.cols());
  loss_backward_accum(pred, target, cfg, 1.0 / static_cast<double>(pred.size()), grad, vgs_step, vds_step);
  return grad;
}

}  // namespace prime
