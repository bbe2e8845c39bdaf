#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "prime/evaluation.hpp"

namespace prime {

inline constexpr double kVdd = 0.7;
inline constexpr double kDefaultLoadF = 0.9e-15;
inline constexpr double kVtcToleranceV = 1e-4;
inline constexpr double kCurrentBalanceA = 1e-12;

// Node-voltage current functions for the inverter: both take (vin, vout).
// The NMOS pulls the output down, the PMOS sources current into it.
struct DevicePair {
  std::function<double(double vin, double vout)> nmos;
  std::function<double(double vin, double vout)> pmos;
  double vdd = kVdd;
};

// Ideal complementary device: the PMOS is the NMOS reflected about vdd on
// both terminals.
inline std::function<double(double, double)> mirror_pmos(const CurrentFn& nmos_predict, double vdd = kVdd) {
  return [nmos_predict, vdd](double vin, double vout) { return nmos_predict(vdd - vin, vdd - vout); };
}

inline DevicePair make_inverter_pair(const CurrentFn& nmos_predict, double vdd = kVdd) {
  DevicePair p;
  p.nmos = [nmos_predict](double vin, double vout) { return nmos_predict(vin, vout); };
  p.pmos = mirror_pmos(nmos_predict, vdd);
  p.vdd = vdd;
  return p;
}

struct VtcPoint {
  double vin = 0.0;
  double vout = 0.0;
  bool clamped = false;  // no sign change in [0, vdd]; endpoint reported
};

// DC transfer curve: for each vin, bisection on the monotone current
// imbalance I_pmos - I_nmos over vout in [0, vdd].
inline std::vector<VtcPoint> inverter_vtc(const DevicePair& pair, int npoints) {
  if (npoints < 2) throw std::invalid_argument("inverter_vtc: need at least 2 points");
  std::vector<VtcPoint> curve;
  curve.reserve(static_cast<size_t>(npoints));
  for (int i = 0; i < npoints; ++i) {
    const double vin = pair.vdd * i / (npoints - 1);
    auto imbalance = [&](double vout) { return pair.pmos(vin, vout) - pair.nmos(vin, vout); };
    double lo = 0.0, hi = pair.vdd;
    double f_lo = imbalance(lo), f_hi = imbalance(hi);
    VtcPoint pt;
    pt.vin = vin;
    if (f_lo == 0.0) {
      pt.vout = lo;
    } else if (f_hi == 0.0) {
      pt.vout = hi;
    } else if (f_lo < 0.0 || f_hi > 0.0) {
      // imbalance is positive at vout=0 and negative at vout=vdd for any
      // sane device; anything else means no crossing in range
      pt.vout = std::abs(f_lo) < std::abs(f_hi) ? lo : hi;
      pt.clamped = true;
    } else {
      while (hi - lo > kVtcToleranceV) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = imbalance(mid);
        if (std::abs(f_mid) <= kCurrentBalanceA) {
          lo = hi = mid;
          break;
        }
        if (f_mid > 0.0)
          lo = mid;
        else
          hi = mid;
      }
      pt.vout = 0.5 * (lo + hi);
    }
    curve.push_back(pt);
  }
  return curve;
}

struct Waveform {
  std::vector<double> t;     // s, strictly increasing
  std::vector<double> vin;   // V
  std::vector<double> vout;  // V
};

inline constexpr double kStateClampLo = -0.1;
inline constexpr int kMaxDtHalvings = 8;

// Transient response of the loaded inverter: C dVout/dt = I_p - I_n,
// integrated with classical RK4 from Vout(0) = vdd. A step that moves the
// output by more than vdd is treated as instability; dt is halved (up to 8
// times, persistently) before giving up.
inline Waveform inverter_transient(const DevicePair& pair, double cload, const std::function<double(double)>& vin_of_t,
                                   double dt, double t_end) {
  if (dt <= 0.0 || t_end <= 0.0) throw std::invalid_argument("inverter_transient: dt and t_end must be > 0");
  if (cload <= 0.0) throw std::invalid_argument("inverter_transient: cload must be > 0");
  const double clamp_hi = pair.vdd + 0.1;
  auto dvdt = [&](double t, double v) {
    const double vin = vin_of_t(t);
    return (pair.pmos(vin, v) - pair.nmos(vin, v)) / cload;
  };
  Waveform w;
  double t = 0.0;
  double v = pair.vdd;
  int halvings = 0;
  w.t.push_back(t);
  w.vin.push_back(vin_of_t(t));
  w.vout.push_back(v);
  while (t < t_end) {
    const double step = std::min(dt, t_end - t);
    const double k1 = dvdt(t, v);
    const double k2 = dvdt(t + 0.5 * step, v + 0.5 * step * k1);
    const double k3 = dvdt(t + 0.5 * step, v + 0.5 * step * k2);
    const double k4 = dvdt(t + step, v + step * k3);
    const double dv = step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!std::isfinite(dv) || std::abs(dv) > pair.vdd) {
      if (++halvings > kMaxDtHalvings) {
        throw std::runtime_error("inverter_transient: unstable after " + std::to_string(kMaxDtHalvings) +
                                 " dt halvings (dt=" + std::to_string(dt) + ")");
      }
      dt *= 0.5;
      continue;
    }
    v = std::clamp(v + dv, kStateClampLo, clamp_hi);
    t += step;
    w.t.push_back(t);
    w.vin.push_back(vin_of_t(t));
    w.vout.push_back(v);
  }
  return w;
}

inline std::string vtc_csv(const std::vector<VtcPoint>& curve) {
  std::string out = "vin,vout,clamped\n";
  for (const VtcPoint& p : curve) {
    out += fmt17(p.vin) + "," + fmt17(p.vout) + "," + (p.clamped ? "1" : "0") + "\n";
  }
  return out;
}

inline std::string waveform_csv(const Waveform& w) {
  std::string out = "t,vin,vout\n";
  for (size_t i = 0; i < w.t.size(); ++i) {
    out += fmt17(w.t[i]) + "," + fmt17(w.vin[i]) + "," + fmt17(w.vout[i]) + "\n";
  }
  return out;
}

}  // namespace prime
