#pragma once

// Isolated microgrid model: one diesel generator, aggregated PV, one battery
// and an aggregated load. Everything here is a pure function of its inputs.

#include <span>
#include <utility>
#include <vector>

namespace mg {

struct BatteryParams {
  double p_max = 120.0;  // kW, charge and discharge
  double e_max = 2000.0;  // kWh
  double e_min = 24.0;    // kWh
  double eta_ch = 0.98;
  double eta_dis = 0.98;

  void validate() const;
};

struct DGParams {
  double p_min = 100.0;  // kW
  double p_max = 600.0;  // kW
  double a = 0.005;      // $/kW^2h
  double b = 6.0;        // $/kWh
  double c = 100.0;      // $/h

  // Coefficients may be zero only when `allow_zero_cost` is set (used by tests).
  void validate(bool allow_zero_cost = false) const;
};

struct RewardWeights {
  double k1 = 0.001;
  double k2 = 1.0;
  double k21 = 1.0;
  double k22 = 1.0;

  void validate() const;
};

struct HorizonConfig {
  int t_steps = 24;
  double delta_t = 1.0;  // hours
  int tau = 4;
  double gamma = 1.0;

  void validate() const;
};

struct Range {
  double lo = 0.0;
  double hi = 1.0;

  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct MicrogridConfig {
  BatteryParams battery;
  DGParams dg;
  RewardWeights weights;
  HorizonConfig horizon;
  // Input-normalization ranges. Never used to clamp data.
  Range load_range{0.0, 800.0};
  Range pv_range{0.0, 300.0};

  void validate() const;
};

// One exogenous sample: aggregated load demand and PV output, kW.
struct LoadPv {
  double load = 0.0;
  double pv = 0.0;

  bool operator==(const LoadPv&) const = default;
};

// s_t = (P^L_t, P^PV_t, E_t)
struct State {
  double p_load = 0.0;
  double p_pv = 0.0;
  double soc = 0.0;
};

// o_t = (P^L_{t-1}, P^PV_{t-1}, E_t)
struct Observation {
  double p_load_prev = 0.0;
  double p_pv_prev = 0.0;
  double soc = 0.0;

  bool operator==(const Observation&) const = default;
};

// h_t: tau-1 lagged (load, PV) pairs, oldest first, followed by the current observation.
struct History {
  std::vector<LoadPv> window;
  Observation head;

  int tau() const { return static_cast<int>(window.size()) + 1; }
  bool operator==(const History&) const = default;
};

struct Action {
  double p_dg = 0.0;
};

struct ChargeLimits {
  double charge = 0.0;
  double discharge = 0.0;
};

struct BatteryStep {
  double next_soc = 0.0;
  double p_batt = 0.0;
  bool charging = false;
};

struct StepOutcome {
  double next_soc = 0.0;
  double reward = 0.0;
  double c_dg = 0.0;
  double c_us = 0.0;
  double delta = 0.0;
  double p_batt = 0.0;
  bool charging = false;
};

double dg_cost(double p_dg, const DGParams& dg, double delta_t);

double power_surplus(double p_dg, double p_pv, double p_load);

ChargeLimits charge_limits(double soc, const BatteryParams& bat, double delta_t);

BatteryStep battery_step(double soc, double delta, const BatteryParams& bat, double delta_t);

double unbalance_cost(double delta, ChargeLimits limits, const RewardWeights& w, double delta_t);

std::pair<State, StepOutcome> env_step(const State& state, Action action, LoadPv next_exo,
                                       const MicrogridConfig& cfg);

// Reward only; same arithmetic as env_step without building the next state.
StepOutcome evaluate_step(const State& state, double p_dg, const MicrogridConfig& cfg);

Observation make_observation(LoadPv prev_exo, double soc);

History advance_history(const History& h, const Observation& next_obs);

double episode_return(std::span<const double> rewards, double gamma, int t_steps);

}  // namespace mg
