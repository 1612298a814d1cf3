#pragma once

// Brute-force one-step optimizer used to check the closed-form myopic action.

#include <cmath>

#include "mg/microgrid.hpp"

namespace mgtest {

inline double step_objective(const mg::State& s, double p, const mg::MicrogridConfig& cfg) {
  auto out = mg::evaluate_step(s, p, cfg);
  return cfg.weights.k1 * out.c_dg + cfg.weights.k2 * out.c_us;
}

inline double grid_argmin(const mg::State& s, const mg::MicrogridConfig& cfg, double step) {
  double best_p = cfg.dg.p_min, best = step_objective(s, best_p, cfg);
  const int n = static_cast<int>(std::lround((cfg.dg.p_max - cfg.dg.p_min) / step));
  for (int i = 1; i <= n; ++i) {
    const double p = cfg.dg.p_min + i * step;
    const double j = step_objective(s, p, cfg);
    if (j < best) {
      best = j;
      best_p = p;
    }
  }
  return best_p;
}

}  // namespace mgtest
