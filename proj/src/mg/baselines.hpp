#pragma once

// Non-learning dispatch policies: the exact one-step (myopic) optimizer,
// trajectory planning on a smoothed model, and receding-horizon control
// driven by a recurrent load/PV forecaster.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mg/data.hpp"
#include "mg/ilqr.hpp"
#include "mg/microgrid.hpp"
#include "mg/nn.hpp"

namespace mg::baselines {

// argmin over [p_min, p_max] of k1*c_dg(P) + k2*c_us(delta(P)); ties go to the smaller P.
Action myopic_action(const State& state, const MicrogridConfig& cfg);
// The same optimizer fed with the lagged (load, PV) pair.
Action myopic_pomdp_action(const Observation& obs, const MicrogridConfig& cfg);

struct SmoothingConfig {
  double sharpness = 0.05;  // 1/kW; softplus width is about 1/sharpness
  double anneal = 2.0;      // sharpness multiplier per outer iteration
  int outer_iterations = 4;
  ilqr::Settings solver{};

  void validate() const;
};

struct PlanDiagnostics {
  double sharpness = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost;            // smoothed cost per accepted iteration
  std::vector<double> regularization;
};

struct Plan {
  std::vector<double> actions;       // kW, within [p_min, p_max]
  std::vector<double> gains;         // d action / d soc
  std::vector<double> nominal_soc;   // true-model rollout of `actions`, length + 1
  double true_cost = 0.0;            // sum of k1*c_dg + k2*c_us on the true model (= -return)
  bool converged = false;
  bool myopic_nominal = true;
  std::vector<PlanDiagnostics> diagnostics;

  // Action at step index i (0-based) given the realized soc.
  double action(std::size_t i, double soc, const DGParams& dg) const;
};

// True-model cost of an open-loop action sequence.
double sequence_cost(double soc0, std::span<const LoadPv> exo, std::span<const double> actions,
                     const MicrogridConfig& cfg, std::vector<double>* socs = nullptr);

// Myopic closed-loop rollout used as the nominal trajectory.
std::vector<double> myopic_sequence(double soc0, std::span<const LoadPv> exo, const MicrogridConfig& cfg);

// Plans over exo.size() steps from soc0. The nominal trajectory is the
// myopic one, or `init` when it has the right length and a lower true cost.
Plan ilqg_plan(double soc0, std::span<const LoadPv> exo, const MicrogridConfig& cfg, const SmoothingConfig& sm,
               std::span<const double> init = {});

// Exogenous pairs as seen through one step of lag: step t reads pair t-1.
std::vector<LoadPv> lagged_exo(const data::DayProfile& day);
std::vector<LoadPv> day_exo(const data::DayProfile& day);

Plan ilqg_pomdp_plan(double soc0, const data::DayProfile& day, const MicrogridConfig& cfg, const SmoothingConfig& sm);

struct ForecasterConfig {
  int window = 24;  // past pairs fed to the network
  int hidden = 32;
  int head = 64;
  int epochs = 300;
  int batch = 32;
  double step_size = 3e-3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ForecastError {
  double load = 0.0;  // MSE after min-max normalization
  double pv = 0.0;
};

struct Forecaster {
  nn::Network net{nn::RecurrentSpec{2, {1}, 0, {}, 2, nn::Activation::Identity, 0}};
  Range load_range;
  Range pv_range;
  int window = 24;
  int horizon = 24;
  ForecastError fit;  // in-sample error after training
};

// `history` is a contiguous run of pairs at the planning resolution.
Forecaster forecaster_train(std::span<const LoadPv> history, int horizon, const ForecasterConfig& cfg);
// Uses the last `window` pairs of `past`; returns `horizon` pairs.
std::vector<LoadPv> forecaster_predict(const Forecaster& f, std::span<const LoadPv> past);
ForecastError forecast_error(const Forecaster& f, std::span<const LoadPv> predicted, std::span<const LoadPv> actual);

using ForecastFn = std::function<std::vector<LoadPv>(std::span<const LoadPv> past)>;

// Receding-horizon controller. At 1-based step t, `known` holds the realized
// pairs in chronological order and ends at the newest pair the controller may
// see: pair t for the full-state variant, pair t-1 for the lagged one. Each
// plan covers steps t..T with the newest known pair first, then forecasts,
// and is warm-started from the tail of the previous plan.
class MpcController {
 public:
  MpcController(MicrogridConfig cfg, SmoothingConfig sm, ForecastFn forecast);

  void reset() { tail_.clear(); }
  Action step(double soc, int t, std::span<const LoadPv> known);

 private:
  MicrogridConfig cfg_;
  SmoothingConfig sm_;
  ForecastFn forecast_;
  std::vector<double> tail_;
};

}  // namespace mg::baselines
