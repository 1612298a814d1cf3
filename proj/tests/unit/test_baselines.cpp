#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../common/lqr_oracle.hpp"
#include "../common/myopic_oracle.hpp"
#include "mg/baselines.hpp"
#include "mg/errors.hpp"

namespace {

using mg::LoadPv;
using mg::baselines::myopic_action;

mg::MicrogridConfig defaults() { return mg::MicrogridConfig{}; }

TEST(Myopic, DischargeBreakpoint) {
  auto cfg = defaults();
  EXPECT_NEAR(myopic_action({400, 50, 500}, cfg).p_dg, 230.0, 1e-9);
  EXPECT_NEAR(mgtest::grid_argmin({400, 50, 500}, cfg, 0.01), 230.0, 0.01);
}

TEST(Myopic, PvSurplusGivesMinimum) {
  auto cfg = defaults();
  EXPECT_EQ(myopic_action({100, 300, 500}, cfg).p_dg, 100.0);
}

TEST(Myopic, EmptyBatteryAtPeakGivesMaximum) {
  auto cfg = defaults();
  EXPECT_EQ(myopic_action({700, 0, 24}, cfg).p_dg, 600.0);
}

TEST(Myopic, PomdpUsesLaggedPair) {
  auto cfg = defaults();
  EXPECT_EQ(mg::baselines::myopic_pomdp_action({400, 50, 500}, cfg).p_dg, myopic_action({400, 50, 500}, cfg).p_dg);
  EXPECT_EQ(mg::baselines::myopic_pomdp_action({400, 50, 500}, cfg).p_dg,
            myopic_action({400, 50, 500}, cfg).p_dg);
  EXPECT_NE(mg::baselines::myopic_pomdp_action({400, 50, 500}, cfg).p_dg, myopic_action({450, 50, 500}, cfg).p_dg);
  EXPECT_EQ(mg::baselines::myopic_pomdp_action({400, 50, 24}, cfg).p_dg, myopic_action({400, 50, 24}, cfg).p_dg);
}

TEST(Myopic, MatchesGridSearchOnRandomStates) {
  auto cfg = defaults();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> load(0, 800), pv(0, 300), soc(24, 2000);
  for (int i = 0; i < 200; ++i) {
    mg::State s{load(rng), pv(rng), soc(rng)};
    const double p = myopic_action(s, cfg).p_dg;
    ASSERT_GE(p, cfg.dg.p_min);
    ASSERT_LE(p, cfg.dg.p_max);
    ASSERT_NEAR(p, mgtest::grid_argmin(s, cfg, 0.01), 0.01 + 1e-9);
  }
}

TEST(Myopic, NonDefaultWeightsUseInteriorStationaryPoint) {
  // Cheap unserved energy makes the interior of the unserved region optimal.
  auto cfg = defaults();
  cfg.weights.k2 = 0.0075;
  mg::State s{700, 0, 24};
  const double p = myopic_action(s, cfg).p_dg;
  EXPECT_NEAR(p, (cfg.weights.k2 - 0.001 * 6.0) / (2 * 0.001 * 0.005), 1e-9);
  EXPECT_NEAR(p, mgtest::grid_argmin(s, cfg, 0.01), 0.01);
}

// ---------------------------------------------------------------------------

TEST(Ilqr, MatchesRiccatiOnLinearQuadratic) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    auto lq = mgtest::random_lq(rng, 3, 2, 12);
    Eigen::VectorXd x0 = Eigen::VectorXd::Random(3);
    auto oracle = mgtest::lq_riccati(lq, x0);
    auto prob = mgtest::as_ilqr(lq);
    mg::ilqr::Settings s;
    s.reg_init = 0.0;
    std::vector<Eigen::VectorXd> us(12, Eigen::VectorXd::Zero(2));
    auto sol = mg::ilqr::solve(prob, x0, us, s);
    EXPECT_NEAR(sol.cost, oracle.cost, 1e-6 * std::max(1.0, std::abs(oracle.cost)));
    for (int t = 0; t < 12; ++t) {
      EXPECT_LE((sol.K[t] - oracle.K[t]).cwiseAbs().maxCoeff(), 1e-6);
      EXPECT_LE((sol.us[t] - oracle.us[t]).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(Ilqr, ZeroIterationsReturnNominal) {
  std::mt19937_64 rng(6);
  auto lq = mgtest::random_lq(rng, 2, 1, 5);
  auto prob = mgtest::as_ilqr(lq);
  mg::ilqr::Settings s;
  s.max_iterations = 0;
  Eigen::VectorXd x0 = Eigen::VectorXd::Ones(2);
  std::vector<Eigen::VectorXd> us(5, Eigen::VectorXd::Constant(1, 0.3));
  auto sol = mg::ilqr::solve(prob, x0, us, s);
  EXPECT_EQ(sol.cost, mg::ilqr::rollout_cost(prob, x0, us, nullptr));
}

// ---------------------------------------------------------------------------

mg::data::DayProfile synth_day(std::uint64_t seed) {
  mg::HorizonConfig h;
  return mg::data::synth_profile(seed, h, {});
}

TEST(IlqgPlan, ZeroIterationIsMyopicNominal) {
  auto cfg = defaults();
  auto day = synth_day(3);
  auto exo = mg::baselines::day_exo(day);
  mg::baselines::SmoothingConfig sm;
  sm.solver.max_iterations = 0;
  auto plan = mg::baselines::ilqg_plan(500, exo, cfg, sm);
  auto my = mg::baselines::myopic_sequence(500, exo, cfg);
  EXPECT_EQ(plan.actions, my);
  EXPECT_EQ(plan.true_cost, mg::baselines::sequence_cost(500, exo, my, cfg));
}

TEST(IlqgPlan, ImprovesOnMyopicAndRespectsBounds) {
  auto cfg = defaults();
  mg::baselines::SmoothingConfig sm;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto exo = mg::baselines::day_exo(synth_day(seed));
    for (double soc0 : {24.0, 500.0, 1500.0}) {
      auto plan = mg::baselines::ilqg_plan(soc0, exo, cfg, sm);
      const double my = mg::baselines::sequence_cost(soc0, exo, mg::baselines::myopic_sequence(soc0, exo, cfg), cfg);
      EXPECT_LE(plan.true_cost, my + 1e-12);
      for (double a : plan.actions) {
        EXPECT_GE(a, cfg.dg.p_min);
        EXPECT_LE(a, cfg.dg.p_max);
      }
      for (const auto& d : plan.diagnostics)
        for (std::size_t i = 1; i < d.cost.size(); ++i) EXPECT_LT(d.cost[i], d.cost[i - 1]);
    }
  }
}

TEST(IlqgPlan, DecoupledInstanceMatchesMyopic) {
  // A negligible battery decouples the steps: the plan must be stepwise optimal.
  auto cfg = defaults();
  std::vector<LoadPv> exo;
  for (int t = 0; t < 24; ++t) exo.push_back({250.0 + 5 * t, 20.0 + t});
  mg::baselines::SmoothingConfig sm;
  sm.outer_iterations = 6;
  // Decoupled with battery irrelevant: a battery too small to matter.
  auto tiny = cfg;
  tiny.battery.p_max = 1e-6;
  auto plan2 = mg::baselines::ilqg_plan(500.0, exo, tiny, sm);
  auto my2 = mg::baselines::myopic_sequence(500.0, exo, tiny);
  for (std::size_t t = 0; t < exo.size(); ++t) EXPECT_NEAR(plan2.actions[t], my2[t], 1.0) << t;
}

TEST(IlqgPomdp, ConstantProfileMatchesFullInformation) {
  auto cfg = defaults();
  mg::HorizonConfig h;
  mg::data::DayProfile day;
  day.warmup = h.tau;
  day.pairs.assign(static_cast<std::size_t>(h.t_steps + h.tau), LoadPv{420.0, 60.0});
  mg::baselines::SmoothingConfig sm;
  auto full = mg::baselines::ilqg_plan(800, mg::baselines::day_exo(day), cfg, sm);
  auto lag = mg::baselines::ilqg_pomdp_plan(800, day, cfg, sm);
  EXPECT_EQ(full.actions, lag.actions);
}

TEST(IlqgPomdp, LagShiftOnRamp) {
  mg::data::DayProfile day;
  day.warmup = 4;
  for (int i = 0; i < 28; ++i) day.pairs.push_back({double(100 + i), double(i)});
  auto lag = mg::baselines::lagged_exo(day);
  auto full = mg::baselines::day_exo(day);
  ASSERT_EQ(lag.size(), 24u);
  EXPECT_EQ(lag[0], day.pairs[3]);
  for (std::size_t t = 1; t < 24; ++t) EXPECT_EQ(lag[t], full[t - 1]);
}

TEST(IlqgPomdp, LaggedPlanCostsAtLeastFullPlan) {
  auto cfg = defaults();
  mg::baselines::SmoothingConfig sm;
  double full_total = 0, lag_total = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto day = synth_day(seed);
    auto exo = mg::baselines::day_exo(day);
    auto full = mg::baselines::ilqg_plan(500, exo, cfg, sm);
    auto lag = mg::baselines::ilqg_pomdp_plan(500, day, cfg, sm);
    std::vector<double> executed;
    double soc = 500;
    for (std::size_t t = 0; t < exo.size(); ++t) {
      const double a = lag.action(t, soc, cfg.dg);
      executed.push_back(a);
      soc = mg::evaluate_step({exo[t].load, exo[t].pv, soc}, a, cfg).next_soc;
    }
    full_total += full.true_cost;
    lag_total += mg::baselines::sequence_cost(500, exo, executed, cfg);
  }
  EXPECT_GE(lag_total, full_total - 1e-9);
}

// ---------------------------------------------------------------------------

TEST(Forecaster, ConstantDaysGiveConstantPrediction) {
  std::vector<LoadPv> hist(24 * 4, LoadPv{300.0, 50.0});
  mg::baselines::ForecasterConfig fc;
  fc.epochs = 100;
  fc.hidden = 8;
  fc.head = 0;
  auto f = mg::baselines::forecaster_train(hist, 24, fc);
  auto pred = mg::baselines::forecaster_predict(f, hist);
  ASSERT_EQ(pred.size(), 24u);
  for (const auto& p : pred) {
    EXPECT_NEAR(p.load, 300.0, 0.5);
    EXPECT_NEAR(p.pv, 50.0, 0.5);
  }
  EXPECT_LT(f.fit.load, 1e-4);
  EXPECT_LT(f.fit.pv, 1e-4);
}

TEST(Forecaster, LearnsDiurnalShape) {
  mg::HorizonConfig h;
  auto series = mg::data::synth_series(4, 9, 0, h, {});
  std::vector<LoadPv> hist;
  for (const auto& r : series.records) hist.push_back(r.value);
  std::span<const LoadPv> train(hist.data(), 24 * 8);
  mg::baselines::ForecasterConfig fc;
  fc.epochs = 150;
  auto f = mg::baselines::forecaster_train(train, 24, fc);
  auto pred = mg::baselines::forecaster_predict(f, train);
  std::span<const LoadPv> actual(hist.data() + 24 * 8, 24);
  auto err = mg::baselines::forecast_error(f, pred, actual);
  EXPECT_LT(err.load, 0.02);
  EXPECT_LT(err.pv, 0.02);
}

TEST(Forecaster, InsufficientData) {
  std::vector<LoadPv> hist(30, LoadPv{1, 1});
  EXPECT_THROW(mg::baselines::forecaster_train(hist, 24, {}), mg::DataError);
}

// ---------------------------------------------------------------------------

double run_mpc(const mg::data::DayProfile& day, double soc0, const mg::baselines::ForecastFn& fc, bool lagged,
               const mg::MicrogridConfig& cfg, const mg::baselines::SmoothingConfig& sm) {
  auto exo = mg::baselines::day_exo(day);
  std::vector<LoadPv> known(day.pairs.begin(), day.pairs.begin() + day.warmup);
  double soc = soc0, cost = 0;
  mg::baselines::MpcController mpc(cfg, sm, fc);
  for (int t = 1; t <= 24; ++t) {
    if (!lagged) known.push_back(exo[t - 1]);
    const double a = mpc.step(soc, t, known).p_dg;
    auto out = mg::evaluate_step({exo[t - 1].load, exo[t - 1].pv, soc}, a, cfg);
    cost += cfg.weights.k1 * out.c_dg + cfg.weights.k2 * out.c_us;
    soc = out.next_soc;
    if (lagged) known.push_back(exo[t - 1]);
  }
  return cost;
}

TEST(Mpc, PerfectForecastMatchesOpenLoopPlan) {
  auto cfg = defaults();
  mg::baselines::SmoothingConfig sm;
  auto day = synth_day(7);
  auto exo = mg::baselines::day_exo(day);
  const int warm = day.warmup;
  auto oracle = [&](std::span<const LoadPv> known) {
    // Known ends at pair t; the next pairs are the true future.
    const std::size_t next = known.size() - static_cast<std::size_t>(warm);
    std::vector<LoadPv> out;
    for (std::size_t i = next; i < exo.size(); ++i) out.push_back(exo[i]);
    out.resize(24, exo.back());
    return out;
  };
  const double mpc = run_mpc(day, 500, oracle, false, cfg, sm);
  const double open = mg::baselines::ilqg_plan(500, exo, cfg, sm).true_cost;
  EXPECT_NEAR(mpc, open, 0.01 * open);
}

TEST(Mpc, ForecastErrorIncreasesCost) {
  auto cfg = defaults();
  mg::baselines::SmoothingConfig sm;
  auto day = synth_day(8);
  auto exo = mg::baselines::day_exo(day);
  const int warm = day.warmup;
  auto make = [&](double bias) {
    return [&, bias](std::span<const LoadPv> known) {
      const std::size_t next = known.size() - static_cast<std::size_t>(warm);
      std::vector<LoadPv> out;
      for (std::size_t i = next; i < exo.size(); ++i) out.push_back({exo[i].load * (1 - bias), exo[i].pv});
      out.resize(24, exo.back());
      return out;
    };
  };
  const double exact = run_mpc(day, 300, make(0.0), false, cfg, sm);
  const double small = run_mpc(day, 300, make(0.15), false, cfg, sm);
  const double large = run_mpc(day, 300, make(0.35), false, cfg, sm);
  EXPECT_LE(exact, small + 1e-9);
  EXPECT_LE(small, large + 1e-9);
}

TEST(Mpc, LastStepIsOneStepSolve) {
  auto cfg = defaults();
  mg::baselines::SmoothingConfig sm;
  std::vector<LoadPv> known{{400, 50}};
  auto never = [](std::span<const LoadPv>) -> std::vector<LoadPv> { throw std::logic_error("not called"); };
  mg::baselines::MpcController mpc(cfg, sm, never);
  const double a = mpc.step(500, 24, known).p_dg;
  EXPECT_NEAR(a, myopic_action({400, 50, 500}, cfg).p_dg, 1.0);
}

}  // namespace
