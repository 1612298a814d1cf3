#pragma once

// Generic iterative LQR with Levenberg regularization, box-clamped controls
// and a backtracking line search.

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <vector>

namespace mg::ilqr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Expansion {
  Matrix fx, fu;             // dynamics Jacobians
  double l = 0.0;            // running cost
  Vector lx, lu;             // cost gradient
  Matrix lxx, luu, lux;      // cost Hessian blocks
};

struct Problem {
  int n = 1;
  int m = 1;
  int horizon = 1;
  std::function<Vector(int t, const Vector& x, const Vector& u)> dynamics;
  std::function<double(int t, const Vector& x, const Vector& u)> cost;
  std::function<Expansion(int t, const Vector& x, const Vector& u)> expand;
  // Terminal cost; defaults to zero when empty.
  std::function<double(const Vector& x)> final_cost;
  std::function<void(const Vector& x, Vector& vx, Matrix& vxx)> final_expand;
  Vector u_lo, u_hi;  // empty = unbounded
  // When set, a step is accepted only if this cost does not increase.
  std::function<double(const std::vector<Vector>& us)> guard_cost;
};

struct Settings {
  int max_iterations = 100;
  double tolerance = 1e-9;  // stop when relative cost improvement falls below this
  double reg_init = 1e-6;
  double reg_min = 1e-9;    // values below this snap to zero
  double reg_max = 1e10;
  double reg_up = 4.0;
  double reg_down = 4.0;
  int line_search_steps = 12;
  double line_search_shrink = 0.5;
};

struct Trace {
  std::vector<double> cost;            // cost after each accepted iteration (first = nominal)
  std::vector<double> regularization;  // value used at each iteration
  int iterations = 0;
  bool converged = false;
};

struct Solution {
  std::vector<Vector> xs;  // horizon + 1 states
  std::vector<Vector> us;  // horizon controls
  std::vector<Matrix> K;   // feedback gains from the last backward pass
  std::vector<Vector> k;   // feed-forward terms from the last backward pass
  double cost = 0.0;
  double guard = std::numeric_limits<double>::quiet_NaN();
  Trace trace;
};

double rollout_cost(const Problem& p, const Vector& x0, const std::vector<Vector>& us, std::vector<Vector>* xs);

Solution solve(const Problem& p, const Vector& x0, std::vector<Vector> us_init, const Settings& s);

}  // namespace mg::ilqr
