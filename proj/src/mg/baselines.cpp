#include "mg/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mg/errors.hpp"

namespace mg::baselines {

namespace {

double objective(const State& s, double p, const MicrogridConfig& cfg) {
  const StepOutcome out = evaluate_step(s, p, cfg);
  return cfg.weights.k1 * out.c_dg + cfg.weights.k2 * out.c_us;
}

// Second-order forward-mode number over two variables (soc, p_dg).
struct D2 {
  double v = 0.0;
  double g[2] = {0.0, 0.0};
  double h[3] = {0.0, 0.0, 0.0};  // d2/dx2, d2/dxdu, d2/du2

  static D2 constant(double v) {
    D2 d;
    d.v = v;
    return d;
  }
  static D2 variable(double v, int i) {
    D2 d;
    d.v = v;
    d.g[i] = 1.0;
    return d;
  }
};

D2 operator+(const D2& a, const D2& b) {
  D2 r;
  r.v = a.v + b.v;
  for (int i = 0; i < 2; ++i) r.g[i] = a.g[i] + b.g[i];
  for (int i = 0; i < 3; ++i) r.h[i] = a.h[i] + b.h[i];
  return r;
}
D2 operator*(double s, const D2& a) {
  D2 r;
  r.v = s * a.v;
  for (int i = 0; i < 2; ++i) r.g[i] = s * a.g[i];
  for (int i = 0; i < 3; ++i) r.h[i] = s * a.h[i];
  return r;
}
D2 operator-(const D2& a) { return -1.0 * a; }
D2 operator-(const D2& a, const D2& b) { return a + (-b); }
D2 operator+(const D2& a, double s) {
  D2 r = a;
  r.v += s;
  return r;
}
D2 operator-(const D2& a, double s) { return a + (-s); }
D2 operator-(double s, const D2& a) { return (-a) + s; }
D2 operator*(const D2& a, const D2& b) {
  D2 r;
  r.v = a.v * b.v;
  for (int i = 0; i < 2; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
  r.h[0] = a.h[0] * b.v + 2 * a.g[0] * b.g[0] + a.v * b.h[0];
  r.h[1] = a.h[1] * b.v + a.g[0] * b.g[1] + a.g[1] * b.g[0] + a.v * b.h[1];
  r.h[2] = a.h[2] * b.v + 2 * a.g[1] * b.g[1] + a.v * b.h[2];
  return r;
}

// Chain rule for a scalar function with value f0, slope f1, curvature f2.
D2 chain(const D2& a, double f0, double f1, double f2) {
  D2 r;
  r.v = f0;
  for (int i = 0; i < 2; ++i) r.g[i] = f1 * a.g[i];
  r.h[0] = f2 * a.g[0] * a.g[0] + f1 * a.h[0];
  r.h[1] = f2 * a.g[0] * a.g[1] + f1 * a.h[1];
  r.h[2] = f2 * a.g[1] * a.g[1] + f1 * a.h[2];
  return r;
}

double softplus_value(double x, double k) {
  const double z = k * x;
  return (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) / k;
}

double logistic(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double softplus(double x, double k) { return softplus_value(x, k); }
D2 softplus(const D2& a, double k) {
  const double s = logistic(k * a.v);
  return chain(a, softplus_value(a.v, k), s, k * s * (1.0 - s));
}

template <class A, class B>
auto smin(const A& a, const B& b, double k) {
  return a - softplus(a - b, k);
}

// Smoothed one-step model; returns (next soc, cost).
template <class T>
std::pair<T, T> smooth_step(const T& e, const T& p, LoadPv exo, const MicrogridConfig& cfg, double k) {
  const auto& bat = cfg.battery;
  const auto& w = cfg.weights;
  const double dt = cfg.horizon.delta_t;
  const T delta = p + (exo.pv - exo.load);
  const T ch = smin(bat.p_max, (1.0 / (bat.eta_ch * dt)) * (bat.e_max - e), k);
  const T dis = smin(bat.p_max, (bat.eta_dis / dt) * (e - bat.e_min), k);
  const T pc = smin(softplus(delta, k), ch, k);
  const T pd = smin(softplus(-delta, k), dis, k);
  const T next = e + (bat.eta_ch * dt) * pc - (dt / bat.eta_dis) * pd;
  const T c_dg = dt * (cfg.dg.a * (p * p) + cfg.dg.b * p + cfg.dg.c);
  const T c_us = dt * (w.k21 * softplus(delta - ch, k) + w.k22 * softplus(-delta - dis, k));
  const T cost = w.k1 * c_dg + w.k2 * c_us;
  return {next, cost};
}

}  // namespace

Action myopic_action(const State& state, const MicrogridConfig& cfg) {
  const auto& dg = cfg.dg;
  const auto& w = cfg.weights;
  const ChargeLimits lim = charge_limits(state.soc, cfg.battery, cfg.horizon.delta_t);
  const double base = state.p_load - state.p_pv;
  std::vector<double> cand{dg.p_min, dg.p_max, base - lim.discharge, base + lim.charge};
  // Per-region stationary points of the quadratic objective.
  if (w.k1 * dg.a > 0.0) {
    for (double slope : {-w.k2 * w.k22, 0.0, w.k2 * w.k21})
      cand.push_back(-(w.k1 * dg.b + slope) / (2.0 * w.k1 * dg.a));
  }
  double best_p = dg.p_max;
  double best = std::numeric_limits<double>::infinity();
  for (double p : cand) {
    p = std::clamp(p, dg.p_min, dg.p_max);
    const double j = objective(state, p, cfg);
    const double tol = 1e-12 * std::max(1.0, std::abs(best));
    if (j < best - tol || (std::abs(j - best) <= tol && p < best_p)) {
      best = j;
      best_p = p;
    }
  }
  return {best_p};
}

Action myopic_pomdp_action(const Observation& obs, const MicrogridConfig& cfg) {
  return myopic_action(State{obs.p_load_prev, obs.p_pv_prev, obs.soc}, cfg);
}

void SmoothingConfig::validate() const {
  if (!(sharpness > 0.0)) throw ConfigError("smoothing: sharpness must be positive");
  if (!(anneal >= 1.0)) throw ConfigError("smoothing: anneal factor must be >= 1");
  if (outer_iterations < 1) throw ConfigError("smoothing: need at least one outer iteration");
  if (!(solver.reg_up > 1.0 && solver.reg_down > 1.0)) throw ConfigError("smoothing: regularization factors must be > 1");
  if (!(solver.tolerance > 0.0)) throw ConfigError("smoothing: tolerance must be positive");
  if (solver.max_iterations < 0) throw ConfigError("smoothing: max_iterations must be >= 0");
}

double Plan::action(std::size_t i, double soc, const DGParams& dg) const {
  const double u = actions[i] + gains[i] * (soc - nominal_soc[i]);
  return std::clamp(u, dg.p_min, dg.p_max);
}

double sequence_cost(double soc0, std::span<const LoadPv> exo, std::span<const double> actions,
                     const MicrogridConfig& cfg, std::vector<double>* socs) {
  if (exo.size() != actions.size()) throw ContractViolation("sequence_cost: length mismatch");
  State s{0.0, 0.0, soc0};
  if (socs) {
    socs->clear();
    socs->push_back(soc0);
  }
  double cost = 0.0;
  for (std::size_t t = 0; t < exo.size(); ++t) {
    s.p_load = exo[t].load;
    s.p_pv = exo[t].pv;
    const StepOutcome out = evaluate_step(s, actions[t], cfg);
    cost += cfg.weights.k1 * out.c_dg + cfg.weights.k2 * out.c_us;
    s.soc = out.next_soc;
    if (socs) socs->push_back(s.soc);
  }
  return cost;
}

std::vector<double> myopic_sequence(double soc0, std::span<const LoadPv> exo, const MicrogridConfig& cfg) {
  std::vector<double> actions;
  State s{0.0, 0.0, soc0};
  for (const auto& x : exo) {
    s.p_load = x.load;
    s.p_pv = x.pv;
    const double p = myopic_action(s, cfg).p_dg;
    actions.push_back(p);
    s.soc = evaluate_step(s, p, cfg).next_soc;
  }
  return actions;
}

Plan ilqg_plan(double soc0, std::span<const LoadPv> exo, const MicrogridConfig& cfg, const SmoothingConfig& sm,
               std::span<const double> init) {
  sm.validate();
  if (exo.empty()) throw ContractViolation("ilqg_plan: empty trajectory");
  const int horizon = static_cast<int>(exo.size());
  std::vector<LoadPv> traj(exo.begin(), exo.end());

  Plan plan;
  plan.myopic_nominal = true;
  std::vector<double> start = myopic_sequence(soc0, exo, cfg);
  if (init.size() == exo.size()) {
    std::vector<double> alt(init.begin(), init.end());
    for (double& a : alt) a = std::clamp(a, cfg.dg.p_min, cfg.dg.p_max);
    if (sequence_cost(soc0, exo, alt, cfg) < sequence_cost(soc0, exo, start, cfg)) {
      start = std::move(alt);
      plan.myopic_nominal = false;
    }
  }
  std::vector<ilqr::Vector> us;
  for (double p : start) us.push_back(ilqr::Vector::Constant(1, p));
  plan.gains.assign(exo.size(), 0.0);

  double k = sm.sharpness;
  for (int outer = 0; outer < sm.outer_iterations; ++outer, k *= sm.anneal) {
    ilqr::Problem prob;
    prob.n = 1;
    prob.m = 1;
    prob.horizon = horizon;
    prob.u_lo = ilqr::Vector::Constant(1, cfg.dg.p_min);
    prob.u_hi = ilqr::Vector::Constant(1, cfg.dg.p_max);
    prob.dynamics = [&, k](int t, const ilqr::Vector& x, const ilqr::Vector& u) {
      return ilqr::Vector::Constant(1, smooth_step(x(0), u(0), traj[static_cast<std::size_t>(t)], cfg, k).first);
    };
    prob.cost = [&, k](int t, const ilqr::Vector& x, const ilqr::Vector& u) {
      return smooth_step(x(0), u(0), traj[static_cast<std::size_t>(t)], cfg, k).second;
    };
    prob.expand = [&, k](int t, const ilqr::Vector& x, const ilqr::Vector& u) {
      const auto [nx, c] =
          smooth_step(D2::variable(x(0), 0), D2::variable(u(0), 1), traj[static_cast<std::size_t>(t)], cfg, k);
      ilqr::Expansion e;
      e.fx = ilqr::Matrix::Constant(1, 1, nx.g[0]);
      e.fu = ilqr::Matrix::Constant(1, 1, nx.g[1]);
      e.l = c.v;
      e.lx = ilqr::Vector::Constant(1, c.g[0]);
      e.lu = ilqr::Vector::Constant(1, c.g[1]);
      e.lxx = ilqr::Matrix::Constant(1, 1, c.h[0]);
      e.lux = ilqr::Matrix::Constant(1, 1, c.h[1]);
      e.luu = ilqr::Matrix::Constant(1, 1, c.h[2]);
      return e;
    };
    prob.guard_cost = [&](const std::vector<ilqr::Vector>& cand) {
      std::vector<double> a(cand.size());
      for (std::size_t i = 0; i < cand.size(); ++i) a[i] = cand[i](0);
      return sequence_cost(soc0, traj, a, cfg);
    };
    ilqr::Solution sol = ilqr::solve(prob, ilqr::Vector::Constant(1, soc0), us, sm.solver);
    us = sol.us;
    if (!sol.K.empty())
      for (std::size_t i = 0; i < sol.K.size(); ++i) plan.gains[i] = sol.K[i](0, 0);
    plan.converged = sol.trace.converged;
    plan.diagnostics.push_back({k, sol.trace.iterations, sol.trace.converged, sol.trace.cost,
                                sol.trace.regularization});
    if (sm.solver.max_iterations == 0) break;
  }
  for (const auto& u : us) plan.actions.push_back(u(0));
  plan.true_cost = sequence_cost(soc0, traj, plan.actions, cfg, &plan.nominal_soc);
  return plan;
}

std::vector<LoadPv> day_exo(const data::DayProfile& day) {
  std::vector<LoadPv> out;
  for (int t = 1; t <= day.t_steps(); ++t) out.push_back(day.at_step(t));
  return out;
}

std::vector<LoadPv> lagged_exo(const data::DayProfile& day) {
  if (day.warmup < 1) throw DataError("lagged view needs at least one warm-up pair");
  std::vector<LoadPv> out;
  for (int t = 1; t <= day.t_steps(); ++t) out.push_back(day.at_offset(t - 1));
  return out;
}

Plan ilqg_pomdp_plan(double soc0, const data::DayProfile& day, const MicrogridConfig& cfg,
                     const SmoothingConfig& sm) {
  const auto exo = lagged_exo(day);
  return ilqg_plan(soc0, exo, cfg, sm);
}

void ForecasterConfig::validate() const {
  if (window < 1 || hidden < 1 || head < 0 || epochs < 0 || batch < 1)
    throw ConfigError("forecaster: window, hidden and batch must be >= 1");
  if (!(step_size > 0.0)) throw ConfigError("forecaster: step size must be positive");
}

namespace {

Range widen(Range r) {
  if (!(r.hi > r.lo)) r.hi = r.lo + 1.0;
  return r;
}

double norm(double v, const Range& r) { return (v - r.lo) / r.width(); }

std::vector<nn::Matrix> encode_windows(const Forecaster& f, std::span<const LoadPv> series,
                                       const std::vector<std::size_t>& ends) {
  // ends[j] = index one past the last pair of sample j's window.
  std::vector<nn::Matrix> seq(static_cast<std::size_t>(f.window),
                              nn::Matrix(2, static_cast<Eigen::Index>(ends.size())));
  for (std::size_t j = 0; j < ends.size(); ++j) {
    for (int s = 0; s < f.window; ++s) {
      const LoadPv& p = series[ends[j] - static_cast<std::size_t>(f.window) + static_cast<std::size_t>(s)];
      seq[static_cast<std::size_t>(s)](0, static_cast<Eigen::Index>(j)) = norm(p.load, f.load_range);
      seq[static_cast<std::size_t>(s)](1, static_cast<Eigen::Index>(j)) = norm(p.pv, f.pv_range);
    }
  }
  return seq;
}

}  // namespace

Forecaster forecaster_train(std::span<const LoadPv> history, int horizon, const ForecasterConfig& cfg) {
  cfg.validate();
  if (horizon < 1) throw ConfigError("forecaster: horizon must be >= 1");
  const std::size_t need = static_cast<std::size_t>(cfg.window + horizon);
  if (history.size() < need + 1)
    throw DataError("insufficient data: forecaster needs at least " + std::to_string(need + 1) + " pairs, got " +
                    std::to_string(history.size()));
  Forecaster f;
  f.window = cfg.window;
  f.horizon = horizon;
  Range lr{history[0].load, history[0].load}, pr{history[0].pv, history[0].pv};
  for (const auto& p : history) {
    lr.lo = std::min(lr.lo, p.load);
    lr.hi = std::max(lr.hi, p.load);
    pr.lo = std::min(pr.lo, p.pv);
    pr.hi = std::max(pr.hi, p.pv);
  }
  f.load_range = widen(lr);
  f.pv_range = widen(pr);
  nn::RecurrentSpec spec{2, {cfg.hidden}, 0, {}, 2 * horizon, nn::Activation::Identity, 0};
  if (cfg.head > 0) spec.head = {cfg.head};
  f.net = nn::Network(spec);
  std::mt19937_64 rng(cfg.seed);
  f.net.init(rng);

  std::vector<std::size_t> ends;
  for (std::size_t e = static_cast<std::size_t>(cfg.window); e + static_cast<std::size_t>(horizon) <= history.size(); ++e)
    ends.push_back(e);
  auto targets = [&](const std::vector<std::size_t>& idx) {
    nn::Matrix y(2 * horizon, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j)
      for (int h = 0; h < horizon; ++h) {
        const LoadPv& p = history[idx[j] + static_cast<std::size_t>(h)];
        y(2 * h, static_cast<Eigen::Index>(j)) = norm(p.load, f.load_range);
        y(2 * h + 1, static_cast<Eigen::Index>(j)) = norm(p.pv, f.pv_range);
      }
    return y;
  };

  nn::Optimizer opt({cfg.step_size}, f.net.params().size());
  std::vector<std::size_t> order(ends.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch)) {
      std::vector<std::size_t> idx;
      for (std::size_t j = b; j < std::min(order.size(), b + static_cast<std::size_t>(cfg.batch)); ++j)
        idx.push_back(ends[order[j]]);
      nn::NetInput in;
      in.seq = encode_windows(f, history, idx);
      const nn::Matrix y = targets(idx);
      f.net.params().zero_grad();
      const nn::Matrix out = f.net.forward(in);
      const double scale = 2.0 / static_cast<double>(out.size());
      f.net.backward(scale * (out - y));
      opt.step(f.net.params());
      if (!f.net.params().all_finite()) throw DivergenceError("forecaster training diverged", epoch);
    }
  }

  nn::NetInput all;
  all.seq = encode_windows(f, history, ends);
  const nn::Matrix out = f.net.predict(all);
  const nn::Matrix y = targets(ends);
  double sl = 0.0, sp = 0.0;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (int h = 0; h < horizon; ++h) {
      sl += std::pow(out(2 * h, j) - y(2 * h, j), 2);
      sp += std::pow(out(2 * h + 1, j) - y(2 * h + 1, j), 2);
    }
  const double n = static_cast<double>(out.cols()) * horizon;
  f.fit = {sl / n, sp / n};
  return f;
}

std::vector<LoadPv> forecaster_predict(const Forecaster& f, std::span<const LoadPv> past) {
  if (past.size() < static_cast<std::size_t>(f.window))
    throw DataError("insufficient data: forecast needs " + std::to_string(f.window) + " past pairs");
  nn::NetInput in;
  in.seq = encode_windows(f, past, {past.size()});
  const nn::Matrix out = f.net.predict(in);
  std::vector<LoadPv> pred(static_cast<std::size_t>(f.horizon));
  for (int h = 0; h < f.horizon; ++h) {
    pred[static_cast<std::size_t>(h)].load = std::max(0.0, f.load_range.lo + out(2 * h, 0) * f.load_range.width());
    pred[static_cast<std::size_t>(h)].pv = std::max(0.0, f.pv_range.lo + out(2 * h + 1, 0) * f.pv_range.width());
  }
  return pred;
}

ForecastError forecast_error(const Forecaster& f, std::span<const LoadPv> predicted, std::span<const LoadPv> actual) {
  if (predicted.size() != actual.size() || actual.empty()) throw ContractViolation("forecast_error: length mismatch");
  ForecastError e;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    e.load += std::pow(norm(predicted[i].load, f.load_range) - norm(actual[i].load, f.load_range), 2);
    e.pv += std::pow(norm(predicted[i].pv, f.pv_range) - norm(actual[i].pv, f.pv_range), 2);
  }
  e.load /= static_cast<double>(actual.size());
  e.pv /= static_cast<double>(actual.size());
  return e;
}

MpcController::MpcController(MicrogridConfig cfg, SmoothingConfig sm, ForecastFn forecast)
    : cfg_(std::move(cfg)), sm_(std::move(sm)), forecast_(std::move(forecast)) {
  sm_.validate();
}

Action MpcController::step(double soc, int t, std::span<const LoadPv> known) {
  const int steps = cfg_.horizon.t_steps - t + 1;
  if (steps < 1) throw ContractViolation("mpc: step beyond horizon");
  if (known.empty()) throw DataError("mpc: no realized data");
  std::vector<LoadPv> exo{known.back()};
  if (steps > 1) {
    const std::vector<LoadPv> pred = forecast_(known);
    if (static_cast<int>(pred.size()) < steps - 1) throw DataError("mpc: forecast shorter than remaining horizon");
    exo.insert(exo.end(), pred.begin(), pred.begin() + (steps - 1));
  }
  if (static_cast<int>(tail_.size()) != steps) tail_.clear();
  const Plan plan = ilqg_plan(soc, exo, cfg_, sm_, tail_);
  tail_.assign(plan.actions.begin() + 1, plan.actions.end());
  return {plan.actions.front()};
}

}  // namespace mg::baselines
