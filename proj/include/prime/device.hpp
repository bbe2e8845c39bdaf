#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "prime/rng.hpp"

namespace prime {

inline constexpr double kEps0 = 8.8541878128e-12;  // F/m

enum class CrossSectionKind { Circular, Rectangular, Triangular };

inline const char* to_string(CrossSectionKind k) {
  switch (k) {
    case CrossSectionKind::Circular: return "circular";
    case CrossSectionKind::Rectangular: return "rectangular";
    case CrossSectionKind::Triangular: return "triangular";
  }
  throw std::logic_error("unknown cross-section kind");
}

inline CrossSectionKind cross_section_from_string(const std::string& s) {
  if (s == "circular") return CrossSectionKind::Circular;
  if (s == "rectangular") return CrossSectionKind::Rectangular;
  if (s == "triangular") return CrossSectionKind::Triangular;
  throw std::invalid_argument("unknown cross-section: " + s);
}

// Nanowire cross-section. r is the radius (circular) or the inradius of an
// equilateral triangle (triangular); h/w are the rectangle sides. All in nm.
struct CrossSection {
  CrossSectionKind kind = CrossSectionKind::Circular;
  double r = 0.0;
  double h = 0.0;
  double w = 0.0;

  static CrossSection circular(double r) {
    if (r <= 0.0) throw std::invalid_argument("circular cross-section needs r > 0");
    return {CrossSectionKind::Circular, r, 0.0, 0.0};
  }
  static CrossSection rectangular(double h, double w) {
    if (h <= 0.0 || w <= 0.0) throw std::invalid_argument("rectangular cross-section needs h, w > 0");
    return {CrossSectionKind::Rectangular, 0.0, h, w};
  }
  static CrossSection triangular(double r) {
    if (r <= 0.0) throw std::invalid_argument("triangular cross-section needs r > 0");
    return {CrossSectionKind::Triangular, r, 0.0, 0.0};
  }
};

struct DeviceParams {
  CrossSection shape;
  double lg = 0.0;      // channel length, nm
  double tox = 0.0;     // oxide thickness, nm
  double nsd = 0.0;     // source/drain doping, cm^-3
  double eps_ox = 0.0;  // relative oxide permittivity

  void validate() const {
    if (lg < 1.0) throw std::invalid_argument("device: lg must be >= 1 nm");
    if (tox <= 0.0) throw std::invalid_argument("device: tox must be > 0");
    if (nsd <= 0.0) throw std::invalid_argument("device: nsd must be > 0");
    if (eps_ox < 1.0) throw std::invalid_argument("device: eps_ox must be >= 1");
  }
};

// Fixed constants of the analytical ground-truth model. Changing any value
// is a versioned event; the dataset metadata records a hash of this set.
struct OracleConstants {
  double phi_t = 0.0259;    // thermal voltage, V
  double mu = 200e-4;       // mobility, m^2/Vs (200 cm^2/Vs)
  double eps_si = 11.7;
  double vth0 = 0.32;       // long-channel threshold, V
  double a_sce = 0.25;      // short-channel Vth roll-off amplitude, V
  double b_dibl = 0.15;     // DIBL coefficient
  double n0 = 1.05;         // long-channel ideality
  double n1 = 0.2;          // short-channel ideality increase
  double dvth_nsd = 0.02;   // V per natural log of nsd/1e20
};

inline const OracleConstants& oracle_constants() {
  static const OracleConstants c;
  return c;
}

inline uint64_t oracle_constants_hash() {
  const OracleConstants& c = oracle_constants();
  char buf[256];
  const int len = std::snprintf(buf, sizeof buf, "%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g",
                                c.phi_t, c.mu, c.eps_si, c.vth0, c.a_sce, c.b_dibl, c.n0, c.n1, c.dvth_nsd);
  return fnv1a64(std::string_view(buf, static_cast<size_t>(len)));
}

// Gate perimeter of the channel cross-section, nm.
inline double effective_width(const CrossSection& s) {
  switch (s.kind) {
    case CrossSectionKind::Circular: return 2.0 * std::numbers::pi * s.r;
    case CrossSectionKind::Rectangular: return 2.0 * (s.h + s.w);
    // equilateral triangle with inradius r has side 2*sqrt(3)*r
    case CrossSectionKind::Triangular: return 6.0 * std::numbers::sqrt3 * s.r;
  }
  throw std::logic_error("unknown cross-section kind");
}

// Areal gate-oxide capacitance, F/m^2. Cylindrical formula for circular
// wires, planar approximation otherwise.
inline double oxide_capacitance(const CrossSection& s, double tox_nm, double eps_ox) {
  if (tox_nm <= 0.0) throw std::invalid_argument("oxide_capacitance: tox must be > 0");
  if (s.kind == CrossSectionKind::Circular) {
    const double r_m = s.r * 1e-9;
    const double tox_m = tox_nm * 1e-9;
    return kEps0 * eps_ox / (r_m * std::log(1.0 + tox_m / r_m));
  }
  return kEps0 * eps_ox / (tox_nm * 1e-9);
}

inline double characteristic_radius(const DeviceParams& d) {
  return d.shape.kind == CrossSectionKind::Rectangular ? (d.shape.h + d.shape.w) / 4.0 : d.shape.r;
}

// Electrostatic scaling length lambda, nm.
inline double natural_length(const DeviceParams& d) {
  const OracleConstants& c = oracle_constants();
  return std::sqrt((c.eps_si / d.eps_ox) * characteristic_radius(d) * d.tox);
}

inline double threshold_voltage_model(const DeviceParams& d, double vds) {
  if (vds < 0.0) throw std::invalid_argument("threshold_voltage_model: vds must be >= 0");
  const OracleConstants& c = oracle_constants();
  const double roll = std::exp(-d.lg / (2.0 * natural_length(d)));
  return c.vth0 - c.dvth_nsd * std::log(d.nsd / 1e20) - c.a_sce * roll - c.b_dibl * roll * vds;
}

// ln(1 + e^u) without overflow.
inline double softplus(double u) {
  return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
}

// Single-piece EKV-style charge interpolation. Smooth across subthreshold,
// linear and saturation; exactly zero at vds = 0.
inline double drain_current(const DeviceParams& d, double vgs, double vds) {
  if (vgs < 0.0 || vds < 0.0) throw std::invalid_argument("drain_current: biases must be >= 0");
  const OracleConstants& c = oracle_constants();
  const double roll = std::exp(-d.lg / (2.0 * natural_length(d)));
  const double n = c.n0 + c.n1 * roll;
  const double vth = threshold_voltage_model(d, vds);
  const double denom = 2.0 * n * c.phi_t;
  const double qf = softplus((vgs - vth) / denom);
  const double qr = softplus((vgs - vth - n * vds) / denom);
  const double cox = oxide_capacitance(d.shape, d.tox, d.eps_ox);
  const double weff = effective_width(d.shape);
  const double i0 = 2.0 * n * c.mu * cox * (weff / d.lg) * c.phi_t * c.phi_t;
  return i0 * (qf * qf - qr * qr);
}

// [i][j] = Ids(vgs_list[i], vds_list[j])
inline std::vector<std::vector<double>> iv_surface(const DeviceParams& d,
                                                   const std::vector<double>& vgs_list,
                                                   const std::vector<double>& vds_list) {
  auto check_axis = [](const std::vector<double>& v, const char* name) {
    if (v.empty()) throw std::invalid_argument(std::string("iv_surface: empty ") + name + " axis");
    for (size_t i = 1; i < v.size(); ++i) {
      if (v[i] <= v[i - 1]) throw std::invalid_argument(std::string("iv_surface: ") + name + " axis not ascending");
    }
  };
  check_axis(vgs_list, "vgs");
  check_axis(vds_list, "vds");
  std::vector<std::vector<double>> out(vgs_list.size(), std::vector<double>(vds_list.size()));
  for (size_t i = 0; i < vgs_list.size(); ++i) {
    for (size_t j = 0; j < vds_list.size(); ++j) {
      out[i][j] = drain_current(d, vgs_list[i], vds_list[j]);
    }
  }
  return out;
}

}  // namespace prime
