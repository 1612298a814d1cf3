#include "mg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "mg/errors.hpp"

namespace mg::harness {

using json_io::Json;

// ---------------------------------------------------------------------------
// Names

std::string case_name(CaseId c) {
  switch (c) {
    case CaseId::I: return "I";
    case CaseId::II: return "II";
    case CaseId::III: return "III";
    case CaseId::IV: return "IV";
  }
  return "?";
}

CaseId case_from(const std::string& s) {
  for (CaseId c : {CaseId::I, CaseId::II, CaseId::III, CaseId::IV})
    if (case_name(c) == s) return c;
  throw ConfigError("unknown case '" + s + "' (expected I, II, III or IV)");
}

bool case_lagged(CaseId c) { return c == CaseId::II || c == CaseId::IV; }
bool case_history(CaseId c) { return c == CaseId::III || c == CaseId::IV; }

namespace {

constexpr AlgoId kAllAlgos[] = {AlgoId::FhDdpg,    AlgoId::Ddpg,        AlgoId::FhRdpg, AlgoId::Rdpg,
                                AlgoId::Myopic,    AlgoId::MyopicPomdp, AlgoId::Ilqg,   AlgoId::IlqgPomdp,
                                AlgoId::MpcIlqg,   AlgoId::MpcIlqgPomdp};

}  // namespace

std::string algo_name(AlgoId a) {
  switch (a) {
    case AlgoId::FhDdpg: return "fh-ddpg";
    case AlgoId::Ddpg: return "ddpg";
    case AlgoId::FhRdpg: return "fh-rdpg";
    case AlgoId::Rdpg: return "rdpg";
    case AlgoId::Myopic: return "myopic";
    case AlgoId::MyopicPomdp: return "myopic-pomdp";
    case AlgoId::Ilqg: return "ilqg";
    case AlgoId::IlqgPomdp: return "ilqg-pomdp";
    case AlgoId::MpcIlqg: return "mpc-ilqg";
    case AlgoId::MpcIlqgPomdp: return "mpc-ilqg-pomdp";
  }
  return "?";
}

AlgoId algo_from(const std::string& s) {
  for (AlgoId a : kAllAlgos)
    if (algo_name(a) == s) return a;
  throw ConfigError("unknown algorithm '" + s + "'");
}

bool algo_lagged(AlgoId a) {
  return a == AlgoId::FhRdpg || a == AlgoId::Rdpg || a == AlgoId::MyopicPomdp || a == AlgoId::IlqgPomdp ||
         a == AlgoId::MpcIlqgPomdp;
}

std::optional<drl::Algo> learner(AlgoId a) {
  switch (a) {
    case AlgoId::FhDdpg: return drl::Algo::FhDdpg;
    case AlgoId::Ddpg: return drl::Algo::Ddpg;
    case AlgoId::FhRdpg: return drl::Algo::FhRdpg;
    case AlgoId::Rdpg: return drl::Algo::Rdpg;
    default: return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
  mg.validate();
  initial_soc.validate(mg.battery);
  data.shape.validate();
  smoothing.validate();
  forecaster.validate();
  if (algorithms.empty()) throw ConfigError("config: no algorithms");
  if (seeds.empty()) throw ConfigError("config: at least one seed is required");
  if (eval_episodes < 1) throw ConfigError("config: evaluation needs at least one episode");
  if (preset != "desk" && preset != "full") throw ConfigError("config: preset must be 'desk' or 'full'");
  if (case_history(case_id) && data.training_days < 1) throw ConfigError("config: training_days must be >= 1");
  if (data.forecaster_days < 2) throw ConfigError("config: forecaster_days must be >= 2");
  if (data.source == DataConfig::Source::Csv && (data.csv_path.empty() || data.test_day.empty()))
    throw ConfigError("config: csv source needs csv_path and test_day");
  if (!(trace_initial_soc >= mg.battery.e_min && trace_initial_soc <= mg.battery.e_max))
    throw ConfigError("config: trace_initial_soc outside the battery range");
  for (AlgoId a : algorithms) {
    if (algo_lagged(a) != case_lagged(case_id))
      throw ConfigError("config: algorithm " + algo_name(a) + " is incompatible with case " + case_name(case_id) +
                        (case_lagged(case_id) ? " (lagged observations)" : " (full state)"));
    if (std::count(algorithms.begin(), algorithms.end(), a) > 1)
      throw ConfigError("config: algorithm " + algo_name(a) + " listed twice");
  }
  for (auto a : {drl::Algo::Ddpg, drl::Algo::Rdpg, drl::Algo::FhDdpg, drl::Algo::FhRdpg}) training_for(a, 1);
}

drl::TrainConfig RunConfig::training_for(drl::Algo a, std::uint64_t seed) const {
  drl::TrainConfig tc = preset == "full" ? drl::full_preset(a) : drl::desk_preset(a);
  if (auto it = training_overrides.find("all"); it != training_overrides.end())
    tc = json_io::train_from_json(*it, tc);
  if (auto it = training_overrides.find(drl::algo_name(a)); it != training_overrides.end())
    tc = json_io::train_from_json(*it, tc);
  tc.seed = seed;
  tc.validate();
  return tc;
}

namespace {

Json shape_json(const data::ProfileShape& s) {
  return Json{{"load_night", s.load_night},   {"load_trough", s.load_trough}, {"load_peak", s.load_peak},
              {"load_late", s.load_late},     {"trough_hour", s.trough_hour}, {"peak_hour", s.peak_hour},
              {"pv_peak", s.pv_peak},         {"pv_start_hour", s.pv_start_hour},
              {"pv_peak_hour", s.pv_peak_hour}, {"pv_end_hour", s.pv_end_hour}, {"load_noise", s.load_noise},
              {"pv_noise", s.pv_noise},       {"day_jitter", s.day_jitter}};
}

template <class T>
void get(const Json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

data::ProfileShape shape_from(const Json& j) {
  json_io::check_keys(j,
                      {"load_night", "load_trough", "load_peak", "load_late", "trough_hour", "peak_hour", "pv_peak",
                       "pv_start_hour", "pv_peak_hour", "pv_end_hour", "load_noise", "pv_noise", "day_jitter"},
                      "data.shape");
  data::ProfileShape s;
  const std::string w = "data.shape";
  get(j, "load_night", s.load_night, w);
  get(j, "load_trough", s.load_trough, w);
  get(j, "load_peak", s.load_peak, w);
  get(j, "load_late", s.load_late, w);
  get(j, "trough_hour", s.trough_hour, w);
  get(j, "peak_hour", s.peak_hour, w);
  get(j, "pv_peak", s.pv_peak, w);
  get(j, "pv_start_hour", s.pv_start_hour, w);
  get(j, "pv_peak_hour", s.pv_peak_hour, w);
  get(j, "pv_end_hour", s.pv_end_hour, w);
  get(j, "load_noise", s.load_noise, w);
  get(j, "pv_noise", s.pv_noise, w);
  get(j, "day_jitter", s.day_jitter, w);
  return s;
}

Json results_json(const RunConfig& c) {
  Json j;
  j["case"] = case_name(c.case_id);
  Json algos = Json::array();
  for (AlgoId a : c.algorithms) algos.push_back(algo_name(a));
  j["algorithms"] = algos;
  j["seeds"] = c.seeds;
  j["microgrid"] = json_io::to_json(c.mg);
  Json d;
  d["source"] = c.data.source == DataConfig::Source::Synth ? "synth" : "csv";
  d["synth_seed"] = c.data.synth_seed;
  d["shape"] = shape_json(c.data.shape);
  d["csv_path"] = c.data.csv_path;
  d["test_day"] = c.data.test_day;
  d["training_days"] = c.data.training_days;
  d["forecaster_days"] = c.data.forecaster_days;
  j["data"] = d;
  if (c.initial_soc.kind == data::InitialSocRule::Kind::Fixed)
    j["initial_soc"] = {{"kind", "fixed"}, {"value", c.initial_soc.value}};
  else
    j["initial_soc"] = {{"kind", "uniform"}, {"lo", c.initial_soc.lo}, {"hi", c.initial_soc.hi}};
  j["evaluation"] = {{"episodes", c.eval_episodes}, {"seed", c.eval_seed}, {"trace_initial_soc", c.trace_initial_soc}};
  Json t = c.training_overrides;
  t["preset"] = c.preset;
  j["training"] = t;
  j["smoothing"] = {{"sharpness", c.smoothing.sharpness},
                    {"anneal", c.smoothing.anneal},
                    {"outer_iterations", c.smoothing.outer_iterations},
                    {"max_iterations", c.smoothing.solver.max_iterations},
                    {"tolerance", c.smoothing.solver.tolerance}};
  j["forecaster"] = {{"window", c.forecaster.window},     {"hidden", c.forecaster.hidden},
                     {"head", c.forecaster.head},         {"epochs", c.forecaster.epochs},
                     {"batch", c.forecaster.batch},       {"step_size", c.forecaster.step_size},
                     {"seed", c.forecaster.seed}};
  return j;
}

}  // namespace

Json to_json(const RunConfig& c) {
  Json j = results_json(c);
  j["output"] = {{"dir", c.output_dir}, {"checkpoints", c.write_checkpoints}};
  return j;
}

RunConfig config_from_json(const Json& j) {
  json_io::check_keys(j,
                      {"case", "algorithms", "seeds", "microgrid", "data", "initial_soc", "evaluation", "training",
                       "smoothing", "forecaster", "output"},
                      "config");
  RunConfig c;
  try {
    if (j.contains("case")) c.case_id = case_from(j.at("case").get<std::string>());
    if (j.contains("algorithms")) {
      c.algorithms.clear();
      for (const auto& a : j.at("algorithms")) c.algorithms.push_back(algo_from(a.get<std::string>()));
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("microgrid")) c.mg = json_io::microgrid_from_json(j.at("microgrid"));
    if (auto it = j.find("data"); it != j.end()) {
      json_io::check_keys(*it,
                          {"source", "synth_seed", "shape", "csv_path", "test_day", "training_days",
                           "forecaster_days"},
                          "data");
      if (it->contains("source")) {
        const auto s = it->at("source").get<std::string>();
        if (s == "synth")
          c.data.source = DataConfig::Source::Synth;
        else if (s == "csv")
          c.data.source = DataConfig::Source::Csv;
        else
          throw ConfigError("data.source must be 'synth' or 'csv'");
      }
      get(*it, "synth_seed", c.data.synth_seed, "data");
      if (it->contains("shape")) c.data.shape = shape_from(it->at("shape"));
      get(*it, "csv_path", c.data.csv_path, "data");
      get(*it, "test_day", c.data.test_day, "data");
      get(*it, "training_days", c.data.training_days, "data");
      get(*it, "forecaster_days", c.data.forecaster_days, "data");
    }
    if (auto it = j.find("initial_soc"); it != j.end()) {
      json_io::check_keys(*it, {"kind", "value", "lo", "hi"}, "initial_soc");
      const auto kind = it->at("kind").get<std::string>();
      if (kind == "fixed") {
        c.initial_soc = data::InitialSocRule::fixed(it->at("value").get<double>());
      } else if (kind == "uniform") {
        c.initial_soc = data::InitialSocRule::uniform(it->value("lo", c.mg.battery.e_min),
                                                      it->value("hi", c.mg.battery.e_max));
      } else {
        throw ConfigError("initial_soc.kind must be 'fixed' or 'uniform'");
      }
    }
    if (auto it = j.find("evaluation"); it != j.end()) {
      json_io::check_keys(*it, {"episodes", "seed", "trace_initial_soc"}, "evaluation");
      get(*it, "episodes", c.eval_episodes, "evaluation");
      get(*it, "seed", c.eval_seed, "evaluation");
      get(*it, "trace_initial_soc", c.trace_initial_soc, "evaluation");
    }
    if (auto it = j.find("training"); it != j.end()) {
      json_io::check_keys(*it, {"preset", "all", "ddpg", "rdpg", "fh-ddpg", "fh-rdpg"}, "training");
      c.training_overrides = *it;
      if (it->contains("preset")) {
        c.preset = it->at("preset").get<std::string>();
        c.training_overrides.erase("preset");
      }
    }
    if (auto it = j.find("smoothing"); it != j.end()) {
      json_io::check_keys(*it, {"sharpness", "anneal", "outer_iterations", "max_iterations", "tolerance"},
                          "smoothing");
      get(*it, "sharpness", c.smoothing.sharpness, "smoothing");
      get(*it, "anneal", c.smoothing.anneal, "smoothing");
      get(*it, "outer_iterations", c.smoothing.outer_iterations, "smoothing");
      get(*it, "max_iterations", c.smoothing.solver.max_iterations, "smoothing");
      get(*it, "tolerance", c.smoothing.solver.tolerance, "smoothing");
    }
    if (auto it = j.find("forecaster"); it != j.end()) {
      json_io::check_keys(*it, {"window", "hidden", "head", "epochs", "batch", "step_size", "seed"}, "forecaster");
      get(*it, "window", c.forecaster.window, "forecaster");
      get(*it, "hidden", c.forecaster.hidden, "forecaster");
      get(*it, "head", c.forecaster.head, "forecaster");
      get(*it, "epochs", c.forecaster.epochs, "forecaster");
      get(*it, "batch", c.forecaster.batch, "forecaster");
      get(*it, "step_size", c.forecaster.step_size, "forecaster");
      get(*it, "seed", c.forecaster.seed, "forecaster");
    }
    if (auto it = j.find("output"); it != j.end()) {
      json_io::check_keys(*it, {"dir", "checkpoints"}, "output");
      get(*it, "dir", c.output_dir, "output");
      get(*it, "checkpoints", c.write_checkpoints, "output");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const RunConfig& c) { return json_io::fnv1a_hex(json_io::canonical(results_json(c))); }

int worker_limit() {
  if (const char* v = std::getenv("MG_DISPATCH_THREADS"); v && *v) {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) throw ConfigError("MG_DISPATCH_THREADS must be a positive integer");
    return static_cast<int>(std::min<long>(n, 256));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// Metrics

const AlgoReport& MetricsReport::at(AlgoId a) const {
  for (const auto& r : algorithms)
    if (r.algo == a) return r;
  throw ContractViolation("report has no entry for " + algo_name(a));
}

AlgoReport summarize(AlgoId a, std::vector<RunResult> runs, bool deterministic) {
  AlgoReport r;
  r.algo = a;
  r.deterministic = deterministic;
  r.runs = std::move(runs);
  std::vector<const RunResult*> ok;
  for (const auto& run : r.runs) {
    if (run.failed)
      ++r.failed;
    else
      ok.push_back(&run);
  }
  if (ok.empty()) {
    r.max = r.mean = r.std_error = r.c_dg = r.c_us = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  const double n = static_cast<double>(ok.size());
  r.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const auto* run : ok) {
    r.max = std::max(r.max, run->mean_return);
    sum += run->mean_return;
    r.c_dg += run->c_dg / n;
    r.c_us += run->c_us / n;
  }
  r.mean = sum / n;
  double ss = 0.0;
  for (const auto* run : ok) ss += (run->mean_return - r.mean) * (run->mean_return - r.mean);
  r.std_error = ok.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return r;
}

namespace {

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

Json MetricsReport::to_json() const {
  Json j;
  j["config_hash"] = config_hash;
  j["case"] = case_name(case_id);
  j["eval_episodes"] = eval_episodes;
  Json algos = Json::array();
  for (const auto& a : algorithms) {
    Json e;
    e["algorithm"] = algo_name(a.algo);
    e["deterministic"] = a.deterministic;
    Json runs = Json::array();
    for (const auto& r : a.runs) {
      Json rj;
      rj["seed"] = r.seed;
      rj["failed"] = r.failed;
      if (r.failed) rj["error"] = r.error;
      rj["return"] = num(r.mean_return);
      rj["c_dg"] = num(r.c_dg);
      rj["c_us"] = num(r.c_us);
      runs.push_back(rj);
    }
    e["runs"] = runs;
    e["failed_runs"] = a.failed;
    e["max"] = num(a.max);
    e["mean"] = num(a.mean);
    e["std_error"] = num(a.std_error);
    e["c_dg"] = num(a.c_dg);
    e["c_us"] = num(a.c_us);
    algos.push_back(e);
  }
  j["algorithms"] = algos;
  return j;
}

// ---------------------------------------------------------------------------
// Scenario construction

Scenario build_scenario(const RunConfig& cfg) {
  const HorizonConfig& h = cfg.mg.horizon;
  const int per_day = static_cast<int>(std::llround(24.0 / h.delta_t));
  if (h.t_steps > per_day) throw ConfigError("scenario: horizon longer than one day is not supported");
  const int hist = case_history(cfg.case_id) ? cfg.data.training_days : 0;
  const int lead = std::max(hist, cfg.data.forecaster_days) + 1;

  data::ExogenousSeries series;
  data::Timestamp test_start = 0;
  if (cfg.data.source == DataConfig::Source::Synth) {
    series = data::synth_series(cfg.data.synth_seed, lead + 1, 0, h, cfg.data.shape);
    test_start = static_cast<data::Timestamp>(lead) * 86400;
  } else {
    series = data::load_series(cfg.data.csv_path, h.delta_t);
    test_start = data::parse_timestamp(cfg.data.test_day + "T00:00");
  }

  std::vector<data::DayProfile> training;
  data::DayProfile test = data::slice_day(series, test_start, h);
  for (int k = hist; k >= 1; --k) training.push_back(data::slice_day(series, test_start - k * 86400, h));

  Scenario sc;
  sc.source = case_history(cfg.case_id) ? data::history_source(std::move(training), test, cfg.initial_soc)
                                        : data::same_day_source(test, cfg.initial_soc);
  sc.source.validate(h);

  const std::ptrdiff_t t0 = series.index_of(test_start);
  for (std::ptrdiff_t i = 0; i < t0 + h.t_steps; ++i)
    sc.context.push_back(series.records[static_cast<std::size_t>(i)].value);
  sc.test_offset = static_cast<std::size_t>(t0);
  const std::ptrdiff_t f0 = std::max<std::ptrdiff_t>(0, t0 - static_cast<std::ptrdiff_t>(cfg.data.forecaster_days) * per_day);
  sc.forecaster_history.assign(sc.context.begin() + f0, sc.context.begin() + t0);
  return sc;
}

std::vector<double> eval_initial_socs(const RunConfig& cfg) {
  std::mt19937_64 rng(cfg.eval_seed);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(cfg.eval_episodes));
  for (int i = 0; i < cfg.eval_episodes; ++i) out.push_back(data::sample_initial_soc(cfg.initial_soc, cfg.mg.battery, rng));
  return out;
}

// ---------------------------------------------------------------------------
// Episode runners

namespace {

using Runner = std::function<drl::EpisodeTrace(double soc0)>;

struct PlannerLog {
  std::vector<baselines::PlanDiagnostics> diagnostics;
  double true_cost = 0.0;
  bool converged = false;
};

Runner baseline_runner(AlgoId a, const RunConfig& cfg, const Scenario& sc, const baselines::Forecaster* fc,
                       PlannerLog* log) {
  const MicrogridConfig& m = cfg.mg;
  const data::DayProfile& day = sc.source.test;
  switch (a) {
    case AlgoId::Myopic:
      return [&m, &day](double s0) {
        return drl::rollout([&](const drl::PolicyInput& in) { return baselines::myopic_action(in.state, m).p_dg; },
                            drl::InfoMode::Full, day, s0, m);
      };
    case AlgoId::MyopicPomdp:
      return [&m, &day](double s0) {
        return drl::rollout(
            [&](const drl::PolicyInput& in) { return baselines::myopic_pomdp_action(in.history.head, m).p_dg; },
            drl::InfoMode::Lagged, day, s0, m);
      };
    case AlgoId::Ilqg:
    case AlgoId::IlqgPomdp: {
      const bool lagged = a == AlgoId::IlqgPomdp;
      return [&m, &day, &cfg, lagged, log](double s0) {
        const baselines::Plan plan = lagged ? baselines::ilqg_pomdp_plan(s0, day, m, cfg.smoothing)
                                            : baselines::ilqg_plan(s0, baselines::day_exo(day), m, cfg.smoothing);
        if (log) *log = PlannerLog{plan.diagnostics, plan.true_cost, plan.converged};
        // Feedback on the realized soc; in the full-state case it equals the nominal.
        auto ctl = [&](const drl::PolicyInput& in) {
          return plan.action(static_cast<std::size_t>(in.t - 1), in.state.soc, m.dg);
        };
        return drl::rollout(ctl, lagged ? drl::InfoMode::Lagged : drl::InfoMode::Full, day, s0, m);
      };
    }
    case AlgoId::MpcIlqg:
    case AlgoId::MpcIlqgPomdp: {
      const bool lagged = a == AlgoId::MpcIlqgPomdp;
      return [&m, &day, &cfg, &sc, fc, lagged](double s0) {
        baselines::ForecastFn f = [fc](std::span<const LoadPv> past) { return baselines::forecaster_predict(*fc, past); };
        baselines::MpcController mpc(m, cfg.smoothing, f);
        auto ctl = [&](const drl::PolicyInput& in) {
          const std::size_t visible = sc.test_offset + static_cast<std::size_t>(in.t) - (lagged ? 1u : 0u);
          return mpc.step(in.state.soc, in.t, std::span<const LoadPv>(sc.context.data(), visible)).p_dg;
        };
        return drl::rollout(ctl, lagged ? drl::InfoMode::Lagged : drl::InfoMode::Full, day, s0, m);
      };
    }
    default: break;
  }
  throw ContractViolation("no baseline runner for " + algo_name(a));
}

RunResult evaluate(const Runner& run, std::span<const double> socs, std::uint64_t seed) {
  RunResult r;
  r.seed = seed;
  const double n = static_cast<double>(socs.size());
  for (double s0 : socs) {
    const drl::EpisodeTrace tr = run(s0);
    r.mean_return += tr.ret / n;
    r.c_dg += tr.c_dg_total / n;
    r.c_us += tr.c_us_total / n;
  }
  return r;
}

struct Job {
  AlgoId algo;
  std::uint64_t seed = 0;
  bool learned = false;
  // outputs
  RunResult result;
  std::optional<drl::PolicyBundle> bundle;
  std::vector<drl::CurvePoint> curve;
  std::exception_ptr error;
};

void run_parallel(std::vector<Job>& jobs, const std::function<void(Job&)>& body) {
  const int workers = std::min<int>(worker_limit(), static_cast<int>(jobs.size()));
  if (workers <= 1) {
    for (auto& j : jobs) {
      try {
        body(j);
      } catch (...) {
        j.error = std::current_exception();
      }
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        try {
          body(jobs[i]);
        } catch (...) {
          jobs[i].error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
}

std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

}  // namespace

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + ": " + ec.message());
}

ExperimentResult run_experiment(const RunConfig& cfg) {
  cfg.validate();
  const Scenario sc = build_scenario(cfg);
  const std::vector<double> socs = eval_initial_socs(cfg);

  std::optional<baselines::Forecaster> forecaster;
  for (AlgoId a : cfg.algorithms)
    if ((a == AlgoId::MpcIlqg || a == AlgoId::MpcIlqgPomdp) && !forecaster)
      forecaster = baselines::forecaster_train(sc.forecaster_history, cfg.mg.horizon.t_steps, cfg.forecaster);

  std::vector<Job> jobs;
  for (AlgoId a : cfg.algorithms) {
    if (learner(a)) {
      for (auto s : cfg.seeds) jobs.push_back(Job{a, s, true, {}, {}, {}, {}});
    } else {
      jobs.push_back(Job{a, cfg.seeds.front(), false, {}, {}, {}, {}});
    }
  }

  run_parallel(jobs, [&](Job& j) {
    if (j.learned) {
      const drl::Algo la = *learner(j.algo);
      try {
        drl::TrainResult tr = drl::train(la, cfg.mg, sc.source, cfg.training_for(la, j.seed));
        j.curve = std::move(tr.curve);
        j.bundle = std::move(tr.bundle);
      } catch (const DivergenceError& e) {
        j.result.seed = j.seed;
        j.result.failed = true;
        j.result.error = std::string(e.what()) + " (step " + std::to_string(e.step()) + ")";
        j.result.mean_return = j.result.c_dg = j.result.c_us = std::numeric_limits<double>::quiet_NaN();
        return;
      }
      const drl::PolicyBundle& b = *j.bundle;
      j.result = evaluate([&b, &sc](double s0) { return drl::run_policy(b, sc.source.test, s0); }, socs, j.seed);
    } else {
      const Runner run = baseline_runner(j.algo, cfg, sc, forecaster ? &*forecaster : nullptr, nullptr);
      j.result = evaluate(run, socs, j.seed);
    }
  });
  for (const auto& j : jobs)
    if (j.error) std::rethrow_exception(j.error);

  ExperimentResult out;
  out.report.config_hash = config_hash(cfg);
  out.report.case_id = cfg.case_id;
  out.report.eval_episodes = cfg.eval_episodes;
  for (AlgoId a : cfg.algorithms) {
    std::vector<RunResult> runs;
    bool learned = learner(a).has_value();
    for (const auto& j : jobs) {
      if (j.algo != a) continue;
      if (learned) {
        runs.push_back(j.result);
      } else {
        // Deterministic policies: one evaluation stands for every seed.
        for (auto s : cfg.seeds) {
          RunResult r = j.result;
          r.seed = s;
          runs.push_back(r);
        }
      }
    }
    out.report.algorithms.push_back(summarize(a, std::move(runs), !learned));
  }
  for (auto& j : jobs)
    if (j.bundle) out.policies.push_back(TrainedPolicy{j.algo, j.seed, std::move(*j.bundle)});

  if (!cfg.output_dir.empty()) {
    const std::filesystem::path dir(cfg.output_dir);
    write_text(dir / "report.json", json_io::canonical(out.report.to_json()) + "\n");
    write_text(dir / "config.json", json_io::canonical(to_json(cfg)) + "\n");
    for (const auto& j : jobs)
      if (j.learned && !j.result.failed)
        write_curve(j.curve, dir / ("curve_" + algo_name(j.algo) + "_" + seed_tag(j.seed) + ".csv"));
    for (const auto& p : out.policies)
      if (cfg.write_checkpoints)
        drl::save_bundle(p.bundle, dir / "checkpoints" / algo_name(p.algo) / seed_tag(p.seed));
    // Showcase traces from the first successful seed of each algorithm.
    for (AlgoId a : cfg.algorithms) {
      const std::string file = "trace_" + algo_name(a) + ".csv";
      if (learner(a)) {
        for (const auto& p : out.policies)
          if (p.algo == a) {
            export_trace(drl::run_policy(p.bundle, sc.source.test, cfg.trace_initial_soc), dir / file);
            break;
          }
      } else {
        PlannerLog log;
        const Runner run = baseline_runner(a, cfg, sc, forecaster ? &*forecaster : nullptr, &log);
        export_trace(run(cfg.trace_initial_soc), dir / file);
        if (a == AlgoId::Ilqg || a == AlgoId::IlqgPomdp) {
          Json pj;
          pj["initial_soc"] = cfg.trace_initial_soc;
          pj["true_cost"] = log.true_cost;
          pj["converged"] = log.converged;
          Json passes = Json::array();
          for (const auto& d : log.diagnostics)
            passes.push_back({{"sharpness", d.sharpness},
                              {"iterations", d.iterations},
                              {"converged", d.converged},
                              {"cost", d.cost},
                              {"regularization", d.regularization}});
          pj["passes"] = passes;
          write_text(dir / ("planner_" + algo_name(a) + ".json"), json_io::canonical(pj) + "\n");
        }
      }
    }
    if (forecaster) {
      Json fj{{"window", forecaster->window},
              {"horizon", forecaster->horizon},
              {"fit_mse_load", forecaster->fit.load},
              {"fit_mse_pv", forecaster->fit.pv}};
      write_text(dir / "forecaster.json", json_io::canonical(fj) + "\n");
    }
  }
  return out;
}

namespace {

void check_bundle(const RunConfig& cfg, const drl::PolicyBundle& b) {
  if (b.recurrent != case_lagged(cfg.case_id))
    throw ConfigError("policy " + drl::algo_name(b.algo) + " does not match the information mode of case " +
                      case_name(cfg.case_id));
  if (b.t_steps != cfg.mg.horizon.t_steps || b.tau != cfg.mg.horizon.tau)
    throw ConfigError("policy horizon does not match the configuration");
}

}  // namespace

RunResult evaluate_bundle(const RunConfig& cfg, const drl::PolicyBundle& bundle) {
  check_bundle(cfg, bundle);
  const Scenario sc = build_scenario(cfg);
  const std::vector<double> socs = eval_initial_socs(cfg);
  return evaluate([&](double s0) { return drl::run_policy(bundle, sc.source.test, s0); }, socs, bundle.seed);
}

drl::EpisodeTrace policy_trace(const RunConfig& cfg, const drl::PolicyBundle& bundle, double soc0) {
  check_bundle(cfg, bundle);
  const Scenario sc = build_scenario(cfg);
  return drl::run_policy(bundle, sc.source.test, soc0);
}

drl::EpisodeTrace baseline_trace(const RunConfig& cfg, AlgoId algo, double soc0) {
  if (learner(algo)) throw ConfigError(algo_name(algo) + " is a learned policy; pass a checkpoint");
  if (algo_lagged(algo) != case_lagged(cfg.case_id))
    throw ConfigError("algorithm " + algo_name(algo) + " is incompatible with case " + case_name(cfg.case_id));
  const Scenario sc = build_scenario(cfg);
  std::optional<baselines::Forecaster> fc;
  if (algo == AlgoId::MpcIlqg || algo == AlgoId::MpcIlqgPomdp)
    fc = baselines::forecaster_train(sc.forecaster_history, cfg.mg.horizon.t_steps, cfg.forecaster);
  return baseline_runner(algo, cfg, sc, fc ? &*fc : nullptr, nullptr)(soc0);
}

std::vector<CalibrationPoint> calibrate_bundle(const RunConfig& cfg, const drl::PolicyBundle& bundle) {
  check_bundle(cfg, bundle);
  const Scenario sc = build_scenario(cfg);
  const std::vector<double> socs = eval_initial_socs(cfg);
  return qvalue_calibration(bundle, sc.source.test, socs);
}

// ---------------------------------------------------------------------------
// Calibration, traces, curves

std::vector<CalibrationPoint> qvalue_calibration(const drl::Controller& policy, const QFunction& q,
                                                 drl::InfoMode mode, const data::DayProfile& day,
                                                 std::span<const double> initial_socs, const MicrogridConfig& cfg) {
  std::vector<CalibrationPoint> pts;
  for (std::size_t e = 0; e < initial_socs.size(); ++e) {
    std::vector<double> est;
    auto ctl = [&](const drl::PolicyInput& in) {
      est.push_back(q(in));
      return policy(in);
    };
    const drl::EpisodeTrace tr = drl::rollout(ctl, mode, day, initial_socs[e], cfg);
    double togo = 0.0;
    std::vector<double> realized(tr.steps.size());
    for (std::size_t i = tr.steps.size(); i-- > 0;) {
      togo = tr.steps[i].reward + cfg.horizon.gamma * togo;
      realized[i] = togo;
    }
    for (std::size_t i = 0; i < tr.steps.size(); ++i)
      pts.push_back(CalibrationPoint{static_cast<int>(e), tr.steps[i].t, est[i], realized[i]});
  }
  return pts;
}

std::vector<CalibrationPoint> qvalue_calibration(const drl::PolicyBundle& bundle, const data::DayProfile& day,
                                                 std::span<const double> initial_socs) {
  if (bundle.critics.size() != bundle.actors.size()) throw ContractViolation("calibration needs the trained critics");
  return qvalue_calibration([&](const drl::PolicyInput& in) { return bundle.act(in); },
                            [&](const drl::PolicyInput& in) { return bundle.q_value(in); }, bundle.info_mode(), day,
                            initial_socs, bundle.mg);
}

double correlation(const std::vector<CalibrationPoint>& pts) {
  if (pts.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    mx += p.estimate;
    my += p.realized;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (const auto& p : pts) {
    sxy += (p.estimate - mx) * (p.realized - my);
    sxx += (p.estimate - mx) * (p.estimate - mx);
    syy += (p.realized - my) * (p.realized - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

namespace {

std::string g17(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_calibration(const std::vector<CalibrationPoint>& pts, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "episode,t,q_estimate,return_to_go\n";
  for (const auto& p : pts) os << p.episode << ',' << p.t << ',' << g17(p.estimate) << ',' << g17(p.realized) << '\n';
  write_text(path, os.str());
}

void export_trace(const drl::EpisodeTrace& trace, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "t,p_pv_kw,p_load_kw,soc_kwh,p_dg_kw,c_dg,c_us,reward\n";
  for (const auto& s : trace.steps)
    os << s.t << ',' << g17(s.p_pv) << ',' << g17(s.p_load) << ',' << g17(s.soc) << ',' << g17(s.p_dg) << ','
       << g17(s.c_dg) << ',' << g17(s.c_us) << ',' << g17(s.reward) << '\n';
  write_text(path, os.str());
}

drl::EpisodeTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "t,p_pv_kw,p_load_kw,soc_kwh,p_dg_kw,c_dg,c_us,reward") throw IoError("trace: unexpected header");
  drl::EpisodeTrace tr;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    drl::StepRecord s;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &s.t, &s.p_pv, &s.p_load, &s.soc, &s.p_dg,
                    &s.c_dg, &s.c_us, &s.reward) != 8)
      throw IoError("trace: malformed row " + std::to_string(row));
    tr.steps.push_back(s);
    tr.ret += s.reward;
    tr.c_dg_total += s.c_dg;
    tr.c_us_total += s.c_us;
  }
  if (!tr.steps.empty()) tr.initial_soc = tr.steps.front().soc;
  return tr;
}

void write_curve(const std::vector<drl::CurvePoint>& curve, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "step,episode,critic_loss,q_mean,eval_return\n";
  for (const auto& c : curve)
    os << c.step << ',' << c.episode << ',' << g17(c.critic_loss) << ',' << g17(c.q_mean) << ','
       << g17(c.eval_return) << '\n';
  write_text(path, os.str());
}

// ---------------------------------------------------------------------------
// k-ratio sweep

std::vector<SweepPoint> sweep_k_ratio(const RunConfig& base, const std::vector<double>& ratios) {
  if (ratios.empty()) throw ConfigError("sweep: no ratios");
  std::vector<SweepPoint> out;
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("sweep: ratios must be positive");
    RunConfig c = base;
    c.mg.weights.k2 = r * base.mg.weights.k1;
    if (!base.output_dir.empty()) c.output_dir = (std::filesystem::path(base.output_dir) / ("ratio_" + g17(r))).string();
    out.push_back(SweepPoint{r, run_experiment(c).report});
  }
  return out;
}

Json sweep_to_json(const std::vector<SweepPoint>& sweep) {
  Json arr = Json::array();
  for (const auto& p : sweep) {
    Json e;
    e["ratio"] = p.ratio;
    e["report"] = p.report.to_json();
    arr.push_back(e);
  }
  return Json{{"sweep", arr}};
}

}  // namespace mg::harness
