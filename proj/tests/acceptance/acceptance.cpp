// Acceptance run: one line per criterion, nonzero exit if any fails.
//
//   acceptance [--out DIR] [criterion numbers...]
//
// Criteria 7-12 train the learners at desk scale and take most of the time.
// Their artifacts (reports, traces, checkpoints) are kept under DIR.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../common/dynamics_oracle.hpp"
#include "../common/gradcheck.hpp"
#include "../common/lqr_oracle.hpp"
#include "../common/myopic_oracle.hpp"
#include "mg/baselines.hpp"
#include "mg/drl.hpp"
#include "mg/harness.hpp"
#include "mg/microgrid.hpp"

namespace fs = std::filesystem;
using mg::harness::AlgoId;
using mg::harness::CaseId;
using mg::harness::MetricsReport;
using mg::harness::RunConfig;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

fs::path g_out = "acceptance_out";

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1-5: exact checks

Outcome dynamics_oracle() {
  const mg::MicrogridConfig cfg;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> load(0, 800), pv(0, 300), soc(24, 2000), p(100, 600);
  double worst = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 1000; ++i) {
    const double l = load(rng), v = pv(rng), e = soc(rng), a = p(rng);
    const auto [next, out] = mg::env_step({l, v, e}, {a}, {0, 0}, cfg);
    const auto ref = mgtest::oracle_step(l, v, e, a, cfg);
    worst = std::max({worst, rel_err(next.soc, ref.next_soc), rel_err(out.reward, ref.reward),
                      rel_err(out.c_dg, ref.c_dg), rel_err(out.c_us, ref.c_us)});
  }
  const double secs = since(t0);
  return {worst <= 1e-9 && secs < 1.0,
          fmt("1000 inputs, max relative error %.2e (limit 1e-9), %.3f s (limit 1 s)", worst, secs)};
}

Outcome soc_containment() {
  const mg::MicrogridConfig cfg;
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> load(0, 900), pv(0, 400), soc(24, 2000), p(100, 600);
  double lo = 1e300, hi = -1e300;
  long violations = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < 100000; ++r) {
    mg::State s{load(rng), pv(rng), soc(rng)};
    for (int t = 0; t < cfg.horizon.t_steps; ++t) {
      s = mg::env_step(s, {p(rng)}, {load(rng), pv(rng)}, cfg).first;
      lo = std::min(lo, s.soc);
      hi = std::max(hi, s.soc);
      if (s.soc < cfg.battery.e_min || s.soc > cfg.battery.e_max) ++violations;
    }
  }
  const double secs = since(t0);
  return {violations == 0 && secs < 10.0,
          fmt("1e5 rollouts x 24 steps, soc range [%.6g, %.6g], %ld violations, %.2f s (limit 10 s)", lo, hi,
              violations, secs)};
}

Outcome myopic_exactness() {
  const mg::MicrogridConfig cfg;
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> load(0, 800), pv(0, 300), soc(24, 2000);
  int regions[4] = {0, 0, 0, 0};
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const mg::State s{load(rng), pv(rng), soc(rng)};
    const double p = mg::baselines::myopic_action(s, cfg).p_dg;
    worst = std::max(worst, std::abs(p - mgtest::grid_argmin(s, cfg, 0.01)));
    // Region of the chosen action, from the oracle's own limits.
    const double d = p + s.p_pv - s.p_load;
    const double ch = std::min(cfg.battery.p_max, (cfg.battery.e_max - s.soc) / cfg.battery.eta_ch);
    const double dis = std::min(cfg.battery.p_max, cfg.battery.eta_dis * (s.soc - cfg.battery.e_min));
    if (d > ch)
      ++regions[0];
    else if (d >= 0)
      ++regions[1];
    else if (d >= -dis)
      ++regions[2];
    else
      ++regions[3];
  }
  const bool covered = regions[0] > 0 && regions[1] > 0 && regions[2] > 0 && regions[3] > 0;
  return {worst <= 0.01 + 1e-9 && covered,
          fmt("1000 states, max |P - P_grid| %.4f kW (limit 0.01); regions spill/charge/discharge/unserved = "
              "%d/%d/%d/%d",
              worst, regions[0], regions[1], regions[2], regions[3])};
}

Outcome gradient_checks() {
  using namespace mg::nn;
  MlpSpec actor{3, {64, 48, 32}, 1, Activation::Tanh, 0, 1};
  MlpSpec critic{3, {64, 48, 32}, 1, Activation::Identity, 1, 1};
  RecurrentSpec ractor{2, {32}, 1, {32}, 1, Activation::Tanh, 0};
  RecurrentSpec rcritic{2, {32}, 1, {48, 32}, 1, Activation::Identity, 1};
  double mlp = 0.0, rec = 0.0;
  int probes_mlp = 0, probes_rec = 0;
  for (auto spec : {NetSpec{actor}, NetSpec{critic}}) {
    Network n(spec);
    const auto r = mgtest::grad_check(n, 41, 70, 30);
    mlp = std::max(mlp, r.max_rel_err);
    probes_mlp += r.probes;
  }
  for (auto spec : {NetSpec{ractor}, NetSpec{rcritic}}) {
    Network n(spec);
    const auto r = mgtest::grad_check(n, 42, 70, 30, 4);
    rec = std::max(rec, r.max_rel_err);
    probes_rec += r.probes;
  }
  return {mlp <= 1e-4 && rec <= 1e-4,
          fmt("MLP %d probes max rel err %.2e; recurrent %d probes max rel err %.2e (limit 1e-4)", probes_mlp, mlp,
              probes_rec, rec)};
}

Outcome ilqg_riccati() {
  double worst_cost = 0.0, worst_gain = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  auto check = [&](const mgtest::LqProblem& lq, const Eigen::VectorXd& x0) {
    const auto oracle = mgtest::lq_riccati(lq, x0);
    const auto prob = mgtest::as_ilqr(lq);
    mg::ilqr::Settings s;
    s.reg_init = 0.0;
    std::vector<Eigen::VectorXd> us(static_cast<std::size_t>(lq.horizon), Eigen::VectorXd::Zero(lq.B.cols()));
    const auto sol = mg::ilqr::solve(prob, x0, us, s);
    worst_cost = std::max(worst_cost, std::abs(sol.cost - oracle.cost) / std::max(1.0, std::abs(oracle.cost)));
    for (int t = 0; t < lq.horizon; ++t)
      worst_gain = std::max(worst_gain, (sol.K[t] - oracle.K[t]).cwiseAbs().maxCoeff());
  };
  std::mt19937_64 rng(104);
  for (int trial = 0; trial < 5; ++trial) check(mgtest::random_lq(rng, 3, 2, 12), Eigen::VectorXd::Random(3));

  // The dispatch problem without clamps: soc integrates the charged surplus at
  // one efficiency, generation cost is quadratic, a terminal term pulls soc
  // toward a target. Constant load and PV keep the affine term fixed.
  const mg::MicrogridConfig cfg;
  const double eta = cfg.battery.eta_ch, dt = cfg.horizon.delta_t, k1 = cfg.weights.k1;
  const double load = 420.0, pv = 90.0, target = 900.0, w = 1e-3;
  mgtest::LqProblem lq;
  lq.horizon = cfg.horizon.t_steps;
  lq.A = Eigen::MatrixXd::Identity(1, 1);
  lq.B = Eigen::MatrixXd::Constant(1, 1, eta * dt);
  lq.c = Eigen::VectorXd::Constant(1, eta * (pv - load) * dt);
  lq.Q = Eigen::MatrixXd::Zero(1, 1);
  lq.q = Eigen::VectorXd::Zero(1);
  lq.R = Eigen::MatrixXd::Constant(1, 1, 2.0 * k1 * cfg.dg.a * dt);
  lq.r = Eigen::VectorXd::Constant(1, k1 * cfg.dg.b * dt);
  lq.Qf = Eigen::MatrixXd::Constant(1, 1, w);
  lq.qf = Eigen::VectorXd::Constant(1, -w * target);
  check(lq, Eigen::VectorXd::Constant(1, 500.0));
  const double secs = since(t0);
  return {worst_cost <= 1e-6 && worst_gain <= 1e-6 && secs < 5.0,
          fmt("6 instances incl. dispatch reduction: cost rel diff %.2e, max gain diff %.2e (limit 1e-6), %.3f s "
              "(limit 5 s)",
              worst_cost, worst_gain, secs)};
}

// ---------------------------------------------------------------------------
// 6: structure of the time-indexed bundles

Outcome fh_structure() {
  RunConfig rc;
  const auto sc = mg::harness::build_scenario(rc);
  std::string detail;
  bool ok = true;
  for (auto algo : {mg::drl::Algo::FhDdpg, mg::drl::Algo::FhRdpg}) {
    auto tc = rc.training_for(algo, 1);
    tc.episodes_per_step = 200;
    mg::data::EpisodeSource src = sc.source;
    const auto res = mg::drl::train(algo, rc.mg, src, tc);
    const fs::path dir = g_out / "structure" / mg::drl::algo_name(algo);
    fs::remove_all(dir);
    mg::drl::save_bundle(res.bundle, dir);
    std::ifstream in(dir / "manifest.json");
    const auto m = mg::json_io::Json::parse(in);
    const auto& actors = m.at("actors");
    const bool ddpg = algo == mg::drl::Algo::FhDdpg;
    const std::size_t expect = ddpg ? 23 : 24;
    bool steps_ok = actors.size() == expect;
    for (std::size_t i = 0; steps_ok && i < actors.size(); ++i)
      steps_ok = actors[i].at("t").get<int>() == static_cast<int>(i) + 1 && fs::exists(dir / actors[i].at("file").get<std::string>());
    const std::string terminal = m.at("terminal_policy").get<std::string>();
    bool terminal_ok = terminal == (ddpg ? "myopic" : "actor");
    if (ddpg) {
      // At t = T the reloaded bundle must dispatch the closed form.
      const auto b = mg::drl::load_bundle(dir);
      std::mt19937_64 rng(106);
      std::uniform_real_distribution<double> soc(24, 2000);
      for (int i = 0; i < 200 && terminal_ok; ++i) {
        const double e = soc(rng);
        mg::drl::PolicyInput in{24, mg::drl::make_state(sc.source.test, 24, e), {}, {}};
        terminal_ok = b.act(in) == mg::baselines::myopic_action(in.state, rc.mg).p_dg;
      }
    }
    ok = ok && steps_ok && terminal_ok;
    detail += fmt("%s%s: %zu actors (expected %zu), t=1..%zu %s, terminal=%s%s", detail.empty() ? "" : "; ",
                  mg::drl::algo_name(algo).c_str(), actors.size(), expect, actors.size(), steps_ok ? "ok" : "BAD",
                  terminal.c_str(), ddpg ? (terminal_ok ? " (matches myopic on 200 states)" : " (MISMATCH)") : "");
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 7-12: experiments

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

RunConfig experiment(CaseId c, std::vector<AlgoId> algos, const std::string& name) {
  RunConfig rc;
  rc.case_id = c;
  rc.algorithms = std::move(algos);
  rc.seeds = kSeeds;
  rc.output_dir = (g_out / name).string();
  return rc;
}

struct Timed {
  MetricsReport report;
  double seconds = 0.0;
};

std::map<std::string, Timed> g_runs;

const Timed& run(const std::string& name, const RunConfig& rc) {
  if (auto it = g_runs.find(name); it != g_runs.end()) return it->second;
  const auto t0 = std::chrono::steady_clock::now();
  auto res = mg::harness::run_experiment(rc);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "  [%s] %.0f s\n", name.c_str(), secs);
  for (const auto& a : res.report.algorithms)
    std::fprintf(stderr, "    %-15s mean %10.4f  std %8.4f  max %10.4f  failed %d\n",
                 mg::harness::algo_name(a.algo).c_str(), a.mean, a.std_error, a.max, a.failed);
  return g_runs[name] = Timed{std::move(res.report), secs};
}

const Timed& case_one() {
  return run("case_I", experiment(CaseId::I, {AlgoId::FhDdpg, AlgoId::Ddpg, AlgoId::Myopic, AlgoId::Ilqg}, "case_I"));
}
const Timed& case_two() {
  return run("case_II", experiment(CaseId::II, {AlgoId::FhRdpg, AlgoId::Rdpg, AlgoId::MyopicPomdp, AlgoId::IlqgPomdp},
                                   "case_II"));
}

std::string failures(const mg::harness::AlgoReport& a) {
  return a.failed ? fmt(" (%d failed runs excluded)", a.failed) : "";
}

Outcome case_one_ordering() {
  const auto& r = case_one();
  const auto& fh = r.report.at(AlgoId::FhDdpg);
  const auto& dd = r.report.at(AlgoId::Ddpg);
  const auto& my = r.report.at(AlgoId::Myopic);
  const auto& il = r.report.at(AlgoId::Ilqg);
  const bool beats = fh.mean >= std::max(dd.mean, my.mean);
  const double floor = il.mean - 0.05 * std::abs(il.mean);
  const bool near_ilqg = fh.mean >= floor;
  const bool tighter = fh.std_error < dd.std_error;
  const bool fast = r.seconds <= 1800.0;
  return {beats && near_ilqg && tighter && fast,
          fmt("FH-DDPG %.4f%s vs DDPG %.4f%s, myopic %.4f [%s]; iLQG %.4f, floor %.4f [%s]; std FH-DDPG %.4f vs DDPG "
              "%.4f [%s]; %.0f s for 5 seeds [%s]",
              fh.mean, failures(fh).c_str(), dd.mean, failures(dd).c_str(), my.mean, beats ? "ok" : "FAIL", il.mean,
              floor, near_ilqg ? "ok" : "FAIL", fh.std_error, dd.std_error, tighter ? "ok" : "FAIL", r.seconds,
              fast ? "ok" : "FAIL")};
}

Outcome case_two_ordering() {
  const auto& r = case_two();
  const auto& fh = r.report.at(AlgoId::FhRdpg);
  const auto& rd = r.report.at(AlgoId::Rdpg);
  const auto& my = r.report.at(AlgoId::MyopicPomdp);
  const bool beats = fh.mean >= std::max(rd.mean, my.mean);
  const bool tighter = fh.std_error < rd.std_error;
  return {beats && tighter,
          fmt("FH-RDPG %.4f%s vs RDPG %.4f%s, myopic-POMDP %.4f [%s]; std FH-RDPG %.4f vs RDPG %.4f [%s]; "
              "iLQG-POMDP %.4f for reference",
              fh.mean, failures(fh).c_str(), rd.mean, failures(rd).c_str(), my.mean, beats ? "ok" : "FAIL",
              fh.std_error, rd.std_error, tighter ? "ok" : "FAIL", r.report.at(AlgoId::IlqgPomdp).mean)};
}

Outcome mdp_vs_pomdp() {
  const auto& a = case_one().report.at(AlgoId::FhDdpg);
  const auto& b = case_two().report.at(AlgoId::FhRdpg);
  // One std error: the larger of the two cross-seed spreads.
  const double se = std::max(a.std_error, b.std_error);
  const double gap = a.mean - b.mean;
  return {gap >= -se, fmt("FH-DDPG %.4f - FH-RDPG %.4f = %.4f (%.2f%% of |FH-DDPG|), allowed down to -%.4f", a.mean,
                          b.mean, gap, 100.0 * gap / std::abs(a.mean), se)};
}

Outcome history_robustness() {
  const auto& three = run("case_III", experiment(CaseId::III, {AlgoId::FhDdpg, AlgoId::Ddpg}, "case_III"));
  const auto& four = run("case_IV", experiment(CaseId::IV, {AlgoId::FhRdpg, AlgoId::Rdpg}, "case_IV"));
  const auto& same_mdp = case_one().report.at(AlgoId::FhDdpg);
  const auto& same_pomdp = case_two().report.at(AlgoId::FhRdpg);
  const auto& f3 = three.report.at(AlgoId::FhDdpg);
  const auto& s3 = three.report.at(AlgoId::Ddpg);
  const auto& f4 = four.report.at(AlgoId::FhRdpg);
  const auto& s4 = four.report.at(AlgoId::Rdpg);
  const bool beat3 = f3.mean > s3.mean, beat4 = f4.mean > s4.mean;
  const double d3 = std::abs(f3.mean - same_mdp.mean) / std::abs(same_mdp.mean);
  const double d4 = std::abs(f4.mean - same_pomdp.mean) / std::abs(same_pomdp.mean);
  const bool close = d3 <= 0.15 && d4 <= 0.15;
  return {beat3 && beat4 && close,
          fmt("III: FH-DDPG %.4f vs DDPG %.4f [%s]; IV: FH-RDPG %.4f vs RDPG %.4f [%s]; history vs same-day: "
              "FH-DDPG %.1f%%, FH-RDPG %.1f%% (limit 15%%) [%s]",
              f3.mean, s3.mean, beat3 ? "ok" : "FAIL", f4.mean, s4.mean, beat4 ? "ok" : "FAIL", 100 * d3, 100 * d4,
              close ? "ok" : "FAIL")};
}

int inversions(const std::vector<double>& v, int direction) {
  int n = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double step = v[i] - v[i - 1];
    const double tol = 1e-9 * std::max(1.0, std::abs(v[i - 1]));
    if (direction * step < -tol) ++n;
  }
  return n;
}

Outcome k_ratio_sweep() {
  RunConfig base = experiment(CaseId::I, {AlgoId::FhDdpg}, "sweep");
  base.seeds = {1, 2, 3};
  base.write_checkpoints = false;
  const std::vector<double> ratios{10, 100, 1000, 10000};
  const auto t0 = std::chrono::steady_clock::now();
  const auto sweep = mg::harness::sweep_k_ratio(base, ratios);
  mg::harness::write_text(g_out / "sweep" / "sweep.json",
                          mg::json_io::canonical(mg::harness::sweep_to_json(sweep)) + "\n");
  std::vector<double> cus, cdg, ret;
  std::string rows;
  for (const auto& p : sweep) {
    const auto& a = p.report.at(AlgoId::FhDdpg);
    cus.push_back(a.c_us);
    cdg.push_back(a.c_dg);
    ret.push_back(a.mean);
    rows += fmt("%s%g: C_US %.2f C_DG %.1f R %.4f", rows.empty() ? "" : "; ", p.ratio, a.c_us, a.c_dg, a.mean);
  }
  const int inv_us = inversions(cus, -1), inv_dg = inversions(cdg, +1);
  const double sat = std::abs(ret[3] - ret[2]) / std::abs(ret[2]);
  const bool ok = inv_us <= 1 && inv_dg <= 1 && sat < 0.10;
  std::fprintf(stderr, "  [sweep] %.0f s\n",
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return {ok, fmt("%s | C_US inversions %d, C_DG inversions %d (limit 1 each); return change 1e3->1e4 %.2f%% (limit 10%%)",
                  rows.c_str(), inv_us, inv_dg, 100 * sat)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  std::vector<std::string> texts;
  for (const char* tag : {"determinism_a", "determinism_b"}) {
    RunConfig rc = experiment(CaseId::I, {AlgoId::FhDdpg, AlgoId::Ddpg, AlgoId::Myopic, AlgoId::Ilqg}, tag);
    rc.seeds = {1, 2};
    rc.write_checkpoints = false;
    fs::remove_all(rc.output_dir);
    mg::harness::run_experiment(rc);
    texts.push_back(slurp(fs::path(rc.output_dir) / "report.json"));
  }
  const bool same = !texts[0].empty() && texts[0] == texts[1];
  return {same, fmt("two runs of a 4-algorithm, 2-seed Case I config: report.json %zu bytes, %s", texts[0].size(),
                    same ? "byte-identical" : "DIFFERENT")};
}

// ---------------------------------------------------------------------------
// 13

Outcome buffer_fifo() {
  const std::size_t cap = mg::drl::full_preset(mg::drl::Algo::FhDdpg).buffer_capacity;
  mg::drl::ReplayBuffer<std::uint64_t> buf(cap);
  const std::uint64_t extra = 1234;
  for (std::uint64_t i = 0; i < cap + extra; ++i) buf.push(i);
  bool ok = cap == 20000 && buf.size() == cap && buf.pushed() == cap + extra;
  for (std::size_t i = 0; ok && i < buf.size(); ++i) ok = buf.at(i) == extra + i;
  // Nothing older than the eviction point is ever sampled.
  std::mt19937_64 rng(113);
  for (int k = 0; ok && k < 200; ++k)
    for (const auto* v : buf.sample(128, rng)) ok = ok && *v >= extra;
  return {ok, fmt("capacity %zu, %llu pushes: size %zu, oldest %llu, newest %llu", cap,
                  static_cast<unsigned long long>(buf.pushed()), buf.size(),
                  static_cast<unsigned long long>(buf.at(0)), static_cast<unsigned long long>(buf.at(buf.size() - 1)))};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      g_out = argv[++i];
    } else {
      char* end = nullptr;
      const long n = std::strtol(a.c_str(), &end, 10);
      if (*end != '\0' || n < 1 || n > 13) {
        std::fprintf(stderr, "usage: %s [--out DIR] [criterion 1-13 ...]\n", argv[0]);
        return 2;
      }
      only.insert(static_cast<int>(n));
    }
  }
  fs::create_directories(g_out);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"dynamics oracle", dynamics_oracle},
      {"soc containment", soc_containment},
      {"myopic exactness", myopic_exactness},
      {"gradient checks", gradient_checks},
      {"iLQG vs Riccati", ilqg_riccati},
      {"FH bundle structure", fh_structure},
      {"Case I ordering", case_one_ordering},
      {"Case II ordering", case_two_ordering},
      {"MDP >= POMDP", mdp_vs_pomdp},
      {"Case III/IV robustness", history_robustness},
      {"k-ratio sweep", k_ratio_sweep},
      {"determinism", determinism},
      {"buffer FIFO", buffer_fifo},
  };
  int failed = 0;
  // Same lines as stdout, kept next to the artifacts.
  std::ofstream summary(g_out / "summary.txt");
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    const std::string line = fmt("[%s] %2d %s: ", o.pass ? "PASS" : "FAIL", id, criteria[i].first) + o.detail +
                             fmt(" (%.1f s)", secs);
    std::printf("%s\n", line.c_str());
    summary << line << '\n' << std::flush;
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  summary << failed << " criteria failed\n";
  return failed == 0 ? 0 : 1;
}
