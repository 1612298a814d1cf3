#include "mg/microgrid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mg/errors.hpp"

namespace mg {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(what);
}

std::string fmt_range(const char* name, double v, double lo, double hi) {
  std::ostringstream os;
  os << name << " = " << v << " outside [" << lo << ", " << hi << "]";
  return os.str();
}

}  // namespace

void BatteryParams::validate() const {
  require(std::isfinite(e_min) && std::isfinite(e_max) && e_min < e_max, "battery: need e_min < e_max");
  require(e_min >= 0.0, "battery: e_min must be non-negative");
  require(p_max > 0.0, "battery: p_max must be positive");
  require(eta_ch > 0.0 && eta_ch <= 1.0, "battery: eta_ch must lie in (0, 1]");
  require(eta_dis > 0.0 && eta_dis <= 1.0, "battery: eta_dis must lie in (0, 1]");
}

void DGParams::validate(bool allow_zero_cost) const {
  require(p_min >= 0.0 && p_min < p_max, "dg: need 0 <= p_min < p_max");
  if (allow_zero_cost)
    require(a >= 0.0 && b >= 0.0 && c >= 0.0, "dg: cost coefficients must be non-negative");
  else
    require(a > 0.0 && b > 0.0 && c > 0.0, "dg: cost coefficients must be positive");
}

void RewardWeights::validate() const {
  // Zero weights are allowed so a reward-free model can be built for testing.
  require(k1 >= 0.0 && k2 >= 0.0 && k21 >= 0.0 && k22 >= 0.0, "reward: weights must be non-negative");
}

void HorizonConfig::validate() const {
  require(t_steps >= 2, "horizon: t_steps must be >= 2");
  require(delta_t > 0.0, "horizon: delta_t must be positive");
  require(tau >= 1, "horizon: tau must be >= 1");
  require(gamma > 0.0 && gamma <= 1.0, "horizon: gamma must lie in (0, 1]");
}

void MicrogridConfig::validate() const {
  battery.validate();
  dg.validate();
  weights.validate();
  horizon.validate();
  require(load_range.lo < load_range.hi, "load_range: need lo < hi");
  require(pv_range.lo < pv_range.hi, "pv_range: need lo < hi");
}

double dg_cost(double p_dg, const DGParams& dg, double delta_t) {
  if (!(p_dg >= dg.p_min && p_dg <= dg.p_max))
    throw ContractViolation(fmt_range("p_dg", p_dg, dg.p_min, dg.p_max));
  return (dg.a * p_dg * p_dg + dg.b * p_dg + dg.c) * delta_t;
}

double power_surplus(double p_dg, double p_pv, double p_load) { return p_dg + p_pv - p_load; }

ChargeLimits charge_limits(double soc, const BatteryParams& bat, double delta_t) {
  if (!(soc >= bat.e_min && soc <= bat.e_max))
    throw ContractViolation(fmt_range("soc", soc, bat.e_min, bat.e_max));
  ChargeLimits lim;
  lim.charge = std::min(bat.p_max, (bat.e_max - soc) / (bat.eta_ch * delta_t));
  lim.discharge = std::min(bat.p_max, bat.eta_dis * (soc - bat.e_min) / delta_t);
  lim.charge = std::max(lim.charge, 0.0);
  lim.discharge = std::max(lim.discharge, 0.0);
  return lim;
}

BatteryStep battery_step(double soc, double delta, const BatteryParams& bat, double delta_t) {
  // Limits come from the pre-step SoC; the clamp below makes containment hold
  // even when floating-point rounding lands one ulp outside.
  const ChargeLimits lim = charge_limits(soc, bat, delta_t);
  BatteryStep out;
  out.charging = delta >= 0.0;
  if (out.charging) {
    out.p_batt = std::min(delta, lim.charge);
    out.next_soc = soc + bat.eta_ch * out.p_batt * delta_t;
  } else {
    out.p_batt = std::min(-delta, lim.discharge);
    out.next_soc = soc - out.p_batt * delta_t / bat.eta_dis;
  }
  out.next_soc = std::clamp(out.next_soc, bat.e_min, bat.e_max);
  return out;
}

double unbalance_cost(double delta, ChargeLimits limits, const RewardWeights& w, double delta_t) {
  if (delta > limits.charge) return w.k21 * (delta - limits.charge) * delta_t;
  if (delta < -limits.discharge) return -w.k22 * (delta + limits.discharge) * delta_t;
  return 0.0;
}

StepOutcome evaluate_step(const State& state, double p_dg, const MicrogridConfig& cfg) {
  const double dt = cfg.horizon.delta_t;
  StepOutcome out;
  out.c_dg = dg_cost(p_dg, cfg.dg, dt);
  out.delta = power_surplus(p_dg, state.p_pv, state.p_load);
  const ChargeLimits lim = charge_limits(state.soc, cfg.battery, dt);
  const BatteryStep bs = battery_step(state.soc, out.delta, cfg.battery, dt);
  out.next_soc = bs.next_soc;
  out.p_batt = bs.p_batt;
  out.charging = bs.charging;
  out.c_us = unbalance_cost(out.delta, lim, cfg.weights, dt);
  out.reward = -(cfg.weights.k1 * out.c_dg + cfg.weights.k2 * out.c_us);
  return out;
}

std::pair<State, StepOutcome> env_step(const State& state, Action action, LoadPv next_exo,
                                       const MicrogridConfig& cfg) {
  StepOutcome out = evaluate_step(state, action.p_dg, cfg);
  State next{next_exo.load, next_exo.pv, out.next_soc};
  return {next, out};
}

Observation make_observation(LoadPv prev_exo, double soc) {
  return Observation{prev_exo.load, prev_exo.pv, soc};
}

History advance_history(const History& h, const Observation& next_obs) {
  History out;
  out.window.reserve(h.window.size());
  if (!h.window.empty()) {
    out.window.assign(h.window.begin() + 1, h.window.end());
    out.window.push_back(LoadPv{h.head.p_load_prev, h.head.p_pv_prev});
  }
  out.head = next_obs;
  return out;
}

double episode_return(std::span<const double> rewards, double gamma, int t_steps) {
  if (static_cast<int>(rewards.size()) != t_steps)
    throw ContractViolation("episode_return: expected " + std::to_string(t_steps) + " rewards, got " +
                            std::to_string(rewards.size()));
  double total = 0.0;
  double weight = 1.0;
  for (double r : rewards) {
    total += weight * r;
    weight *= gamma;
  }
  return total;
}

}  // namespace mg
