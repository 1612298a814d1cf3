#pragma once

// Experiment orchestration: the four evaluation cases, learned and
// model-based dispatchers, metrics, and exported artifacts.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mg/baselines.hpp"
#include "mg/data.hpp"
#include "mg/drl.hpp"
#include "mg/json_io.hpp"
#include "mg/microgrid.hpp"

namespace mg::harness {

// I: full state, same-day training. II: lagged observations, same day.
// III/IV: as I/II but trained on preceding history days and tested on a held-out day.
enum class CaseId { I, II, III, IV };

std::string case_name(CaseId c);
CaseId case_from(const std::string& s);
bool case_lagged(CaseId c);
bool case_history(CaseId c);

enum class AlgoId { FhDdpg, Ddpg, FhRdpg, Rdpg, Myopic, MyopicPomdp, Ilqg, IlqgPomdp, MpcIlqg, MpcIlqgPomdp };

std::string algo_name(AlgoId a);
AlgoId algo_from(const std::string& s);  // ConfigError on unknown names
bool algo_lagged(AlgoId a);
std::optional<drl::Algo> learner(AlgoId a);

struct DataConfig {
  enum class Source { Synth, Csv } source = Source::Synth;
  std::uint64_t synth_seed = 1;
  data::ProfileShape shape;
  std::string csv_path;
  std::string test_day;     // CSV: "YYYY-MM-DD"; synth: ignored (the day after the history)
  int training_days = 7;    // history-day cases
  int forecaster_days = 14; // days preceding the test day used by the MPC forecaster
};

struct RunConfig {
  CaseId case_id = CaseId::I;
  std::vector<AlgoId> algorithms{AlgoId::FhDdpg};
  std::vector<std::uint64_t> seeds{1};
  MicrogridConfig mg;
  DataConfig data;
  data::InitialSocRule initial_soc = data::InitialSocRule::uniform(24.0, 2000.0);
  int eval_episodes = 100;
  std::uint64_t eval_seed = 7;
  std::string preset = "desk";
  // Raw overrides: "all" applies to every learner, then the learner's own entry.
  json_io::Json training_overrides = json_io::Json::object();
  baselines::SmoothingConfig smoothing;
  baselines::ForecasterConfig forecaster;
  double trace_initial_soc = 500.0;
  std::string output_dir;  // empty: no artifacts written
  bool write_checkpoints = true;

  void validate() const;
  drl::TrainConfig training_for(drl::Algo a, std::uint64_t seed) const;
};

json_io::Json to_json(const RunConfig& c);
RunConfig config_from_json(const json_io::Json& j);
RunConfig load_config(const std::filesystem::path& path);
// Hash of everything that affects results (the output directory is excluded).
std::string config_hash(const RunConfig& c);

struct RunResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double mean_return = 0.0;
  double c_dg = 0.0;  // mean day-total generation cost
  double c_us = 0.0;  // mean day-total unbalance cost
};

struct AlgoReport {
  AlgoId algo = AlgoId::Myopic;
  bool deterministic = false;
  std::vector<RunResult> runs;
  int failed = 0;
  double max = 0.0;
  double mean = 0.0;
  double std_error = 0.0;  // sample standard deviation across runs (n - 1)
  double c_dg = 0.0;
  double c_us = 0.0;
};

struct MetricsReport {
  std::string config_hash;
  CaseId case_id = CaseId::I;
  int eval_episodes = 0;
  std::vector<AlgoReport> algorithms;

  const AlgoReport& at(AlgoId a) const;
  json_io::Json to_json() const;
};

// Aggregates per-seed results; failed runs are listed but excluded from the statistics.
AlgoReport summarize(AlgoId a, std::vector<RunResult> runs, bool deterministic);

// Days and exogenous context for one configuration.
struct Scenario {
  data::EpisodeSource source;
  std::vector<LoadPv> context;   // contiguous pairs ending with the test day
  std::size_t test_offset = 0;   // index in `context` of the test day's first step
  std::vector<LoadPv> forecaster_history;  // pairs before the test day
};

Scenario build_scenario(const RunConfig& cfg);

// Initial SoC draws shared by every algorithm (matched episodes).
std::vector<double> eval_initial_socs(const RunConfig& cfg);

struct TrainedPolicy {
  AlgoId algo;
  std::uint64_t seed;
  drl::PolicyBundle bundle;
};

struct ExperimentResult {
  MetricsReport report;
  std::vector<TrainedPolicy> policies;
};

ExperimentResult run_experiment(const RunConfig& cfg);

// Single-policy entry points used by the CLI. The bundle must match the case's information mode.
RunResult evaluate_bundle(const RunConfig& cfg, const drl::PolicyBundle& bundle);
drl::EpisodeTrace policy_trace(const RunConfig& cfg, const drl::PolicyBundle& bundle, double soc0);
// Deterministic baselines only.
drl::EpisodeTrace baseline_trace(const RunConfig& cfg, AlgoId algo, double soc0);

// Worker cap from MG_DISPATCH_THREADS (default: hardware concurrency, at least 1).
int worker_limit();

// ---------------------------------------------------------------------------
// Analysis and export

struct CalibrationPoint {
  int episode = 0;
  int t = 0;
  double estimate = 0.0;
  double realized = 0.0;  // discounted return-to-go from t
};

using QFunction = std::function<double(const drl::PolicyInput&)>;

std::vector<CalibrationPoint> qvalue_calibration(const drl::Controller& policy, const QFunction& q,
                                                 drl::InfoMode mode, const data::DayProfile& day,
                                                 std::span<const double> initial_socs, const MicrogridConfig& cfg);
std::vector<CalibrationPoint> qvalue_calibration(const drl::PolicyBundle& bundle, const data::DayProfile& day,
                                                 std::span<const double> initial_socs);
// Calibration of a bundle on the configured test day over the evaluation SoC draws.
std::vector<CalibrationPoint> calibrate_bundle(const RunConfig& cfg, const drl::PolicyBundle& bundle);
double correlation(const std::vector<CalibrationPoint>& pts);
void write_calibration(const std::vector<CalibrationPoint>& pts, const std::filesystem::path& path);

void export_trace(const drl::EpisodeTrace& trace, const std::filesystem::path& path);
drl::EpisodeTrace load_trace(const std::filesystem::path& path);

void write_curve(const std::vector<drl::CurvePoint>& curve, const std::filesystem::path& path);

struct SweepPoint {
  double ratio = 0.0;  // k2 / k1, with k1 held fixed
  MetricsReport report;
};

std::vector<SweepPoint> sweep_k_ratio(const RunConfig& base, const std::vector<double>& ratios);
json_io::Json sweep_to_json(const std::vector<SweepPoint>& sweep);

// Writes `text` atomically enough for our purposes (temp file then rename).
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace mg::harness
