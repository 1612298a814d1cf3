#include "mg/ilqr.hpp"

#include <algorithm>
#include <cmath>

#include "mg/errors.hpp"

namespace mg::ilqr {

namespace {

Vector clamp_u(const Problem& p, Vector u) {
  if (p.u_lo.size() == 0) return u;
  return u.cwiseMax(p.u_lo).cwiseMin(p.u_hi);
}

struct BackwardResult {
  bool ok = false;
  std::vector<Matrix> K;
  std::vector<Vector> k;
};

BackwardResult backward_pass(const Problem& p, const std::vector<Vector>& xs, const std::vector<Vector>& us,
                             double reg) {
  BackwardResult r;
  r.K.resize(static_cast<std::size_t>(p.horizon));
  r.k.resize(static_cast<std::size_t>(p.horizon));
  Vector vx = Vector::Zero(p.n);
  Matrix vxx = Matrix::Zero(p.n, p.n);
  if (p.final_expand) p.final_expand(xs.back(), vx, vxx);
  for (int t = p.horizon - 1; t >= 0; --t) {
    const auto ti = static_cast<std::size_t>(t);
    const Expansion e = p.expand(t, xs[ti], us[ti]);
    const Vector qx = e.lx + e.fx.transpose() * vx;
    const Vector qu = e.lu + e.fu.transpose() * vx;
    const Matrix qxx = e.lxx + e.fx.transpose() * vxx * e.fx;
    Matrix quu = e.luu + e.fu.transpose() * vxx * e.fu;
    Matrix qux = e.lux + e.fu.transpose() * vxx * e.fx;
    quu = 0.5 * (quu + quu.transpose());
    Matrix quu_reg = quu + reg * Matrix::Identity(p.m, p.m);
    Eigen::LLT<Matrix> llt(quu_reg);
    if (llt.info() != Eigen::Success) return r;
    Vector k = -llt.solve(qu);
    Matrix K = -llt.solve(qux);
    if (p.m == 1 && p.u_lo.size() == 1) {
      // Projected step for a scalar control: a saturated step has no feedback.
      const double target = us[ti](0) + k(0);
      if (target > p.u_hi(0) || target < p.u_lo(0)) {
        k(0) = std::clamp(target, p.u_lo(0), p.u_hi(0)) - us[ti](0);
        K.setZero();
      }
    }
    vx = qx + K.transpose() * quu * k + K.transpose() * qu + qux.transpose() * k;
    vxx = qxx + K.transpose() * quu * K + K.transpose() * qux + qux.transpose() * K;
    vxx = 0.5 * (vxx + vxx.transpose());
    r.K[ti] = std::move(K);
    r.k[ti] = std::move(k);
  }
  r.ok = true;
  return r;
}

}  // namespace

double rollout_cost(const Problem& p, const Vector& x0, const std::vector<Vector>& us, std::vector<Vector>* xs) {
  Vector x = x0;
  if (xs) {
    xs->clear();
    xs->push_back(x);
  }
  double total = 0.0;
  for (int t = 0; t < p.horizon; ++t) {
    const Vector& u = us[static_cast<std::size_t>(t)];
    total += p.cost(t, x, u);
    x = p.dynamics(t, x, u);
    if (xs) xs->push_back(x);
  }
  if (p.final_cost) total += p.final_cost(x);
  return total;
}

Solution solve(const Problem& p, const Vector& x0, std::vector<Vector> us_init, const Settings& s) {
  if (static_cast<int>(us_init.size()) != p.horizon) throw ContractViolation("ilqr: initial controls length mismatch");
  Solution sol;
  for (auto& u : us_init) u = clamp_u(p, u);
  sol.us = std::move(us_init);
  sol.cost = rollout_cost(p, x0, sol.us, &sol.xs);
  if (p.guard_cost) sol.guard = p.guard_cost(sol.us);
  sol.trace.cost.push_back(sol.cost);

  double reg = s.reg_init;
  for (int it = 0; it < s.max_iterations; ++it) {
    sol.trace.iterations = it + 1;
    sol.trace.regularization.push_back(reg);
    BackwardResult br = backward_pass(p, sol.xs, sol.us, reg);
    if (!br.ok) {
      reg = std::max(reg * s.reg_up, s.reg_min > 0 ? s.reg_min : 1e-9);
      if (reg > s.reg_max) break;
      continue;
    }
    sol.K = br.K;
    sol.k = br.k;
    double step_norm = 0.0, u_norm = 1.0;
    for (std::size_t t = 0; t < br.k.size(); ++t) {
      step_norm = std::max(step_norm, br.k[t].cwiseAbs().maxCoeff());
      u_norm = std::max(u_norm, sol.us[t].cwiseAbs().maxCoeff());
    }
    if (step_norm <= 1e-10 * u_norm) {
      sol.trace.converged = true;
      return sol;
    }

    bool accepted = false;
    double alpha = 1.0;
    for (int ls = 0; ls < s.line_search_steps; ++ls, alpha *= s.line_search_shrink) {
      std::vector<Vector> us_new(sol.us.size());
      std::vector<Vector> xs_new;
      xs_new.push_back(x0);
      Vector x = x0;
      double cost = 0.0;
      for (int t = 0; t < p.horizon; ++t) {
        const auto ti = static_cast<std::size_t>(t);
        Vector u = sol.us[ti] + alpha * br.k[ti] + br.K[ti] * (x - sol.xs[ti]);
        u = clamp_u(p, u);
        cost += p.cost(t, x, u);
        x = p.dynamics(t, x, u);
        us_new[ti] = std::move(u);
        xs_new.push_back(x);
      }
      if (p.final_cost) cost += p.final_cost(x);
      if (!std::isfinite(cost) || cost >= sol.cost) continue;
      double guard = sol.guard;
      if (p.guard_cost) {
        guard = p.guard_cost(us_new);
        if (guard > sol.guard) continue;
      }
      const double improvement = sol.cost - cost;
      sol.us = std::move(us_new);
      sol.xs = std::move(xs_new);
      sol.cost = cost;
      sol.guard = guard;
      sol.trace.cost.push_back(cost);
      accepted = true;
      reg = reg / s.reg_down;
      if (reg < s.reg_min) reg = 0.0;
      if (improvement <= s.tolerance * std::max(1.0, std::abs(cost))) {
        sol.trace.converged = true;
        return sol;
      }
      break;
    }
    if (!accepted) {
      reg = std::max(reg * s.reg_up, s.reg_min > 0 ? s.reg_min : 1e-9);
      if (reg > s.reg_max) {
        // No descent direction left at any regularization: a local optimum.
        sol.trace.converged = true;
        break;
      }
    }
  }
  return sol;
}

}  // namespace mg::ilqr
