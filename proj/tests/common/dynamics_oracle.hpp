#pragma once

#include "mg/microgrid.hpp"

namespace mgtest {

// Independent straight-line re-implementation used as an oracle.
struct OracleStep {
  double next_soc, reward, c_dg, c_us;
};

inline OracleStep oracle_step(double load, double pv, double soc, double p, const mg::MicrogridConfig& c) {
  const double dt = c.horizon.delta_t;
  const double cdg = (c.dg.a * p * p + c.dg.b * p + c.dg.c) * dt;
  const double d = p + pv - load;
  double ch = (c.battery.e_max - soc) / (c.battery.eta_ch * dt);
  if (ch > c.battery.p_max) ch = c.battery.p_max;
  double dis = c.battery.eta_dis * (soc - c.battery.e_min) / dt;
  if (dis > c.battery.p_max) dis = c.battery.p_max;
  double e_next;
  double cus = 0.0;
  if (d >= 0) {
    const double pe = d < ch ? d : ch;
    e_next = soc + c.battery.eta_ch * pe * dt;
    if (d > ch) cus = c.weights.k21 * (d - ch) * dt;
  } else {
    const double pe = -d < dis ? -d : dis;
    e_next = soc - pe * dt / c.battery.eta_dis;
    if (d < -dis) cus = -c.weights.k22 * (d + dis) * dt;
  }
  return {e_next, -(c.weights.k1 * cdg + c.weights.k2 * cus), cdg, cus};
}

}  // namespace mgtest
