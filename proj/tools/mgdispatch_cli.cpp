// Command-line front end. Talks to the library only through the C API.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mgdispatch/mgdispatch.h"

namespace {

const std::vector<std::string> kAlgorithms{"fh-ddpg", "ddpg", "fh-rdpg", "rdpg", "myopic", "myopic-pomdp",
                                           "ilqg", "ilqg-pomdp", "mpc-ilqg", "mpc-ilqg-pomdp"};
const std::vector<std::string> kLearners{"fh-ddpg", "ddpg", "fh-rdpg", "rdpg"};

struct Failure {
  mgd_status status;
};

void check(mgd_status s) {
  if (s != MGD_OK) throw Failure{s};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  mgd_string_free(s);
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

struct Common {
  std::string config;
  std::string case_id;
  std::vector<std::string> algos;
  std::vector<std::string> seeds;
  std::string out;
  int episodes = 0;
};

void add_common(CLI::App* sub, Common& c, bool many_algos) {
  sub->add_option("--config", c.config, "Configuration file (JSON, comments allowed)")->check(CLI::ExistingFile);
  sub->add_option("--case", c.case_id, "Evaluation case")->check(CLI::IsMember({"I", "II", "III", "IV"}));
  auto* a = sub->add_option("--algo", c.algos, "Algorithm")->check(CLI::IsMember(kAlgorithms));
  if (!many_algos) a->expected(1);
  sub->add_option("--seed", c.seeds, "Training seed (repeatable)");
  sub->add_option("--episodes", c.episodes, "Evaluation episodes")->check(CLI::PositiveNumber);
}

struct Config {
  mgd_config* p = nullptr;
  ~Config() { mgd_config_free(p); }
};

void build(Config& cfg, const Common& c, const std::string& out_dir) {
  check(c.config.empty() ? mgd_config_default(&cfg.p) : mgd_config_load(c.config.c_str(), &cfg.p));
  if (!c.case_id.empty()) check(mgd_config_set(cfg.p, "case", c.case_id.c_str()));
  if (!c.algos.empty()) check(mgd_config_set(cfg.p, "algorithms", join(c.algos).c_str()));
  if (!c.seeds.empty()) check(mgd_config_set(cfg.p, "seeds", join(c.seeds).c_str()));
  if (c.episodes > 0) check(mgd_config_set(cfg.p, "episodes", std::to_string(c.episodes).c_str()));
  check(mgd_config_set(cfg.p, "output", out_dir.c_str()));
  check(mgd_config_validate(cfg.p));
}

void print_report(const std::string& json) { std::printf("%s\n", json.c_str()); }

int run_experiment(const Common& c, const std::string& out) {
  Config cfg;
  build(cfg, c, out);
  mgd_result* r = nullptr;
  check(mgd_run(cfg.p, &r));
  char* text = nullptr;
  const mgd_status s = mgd_result_report_json(r, &text);
  mgd_result_free(r);
  check(s);
  print_report(take(text));
  if (!out.empty()) std::fprintf(stderr, "artifacts written to %s\n", out.c_str());
  return 0;
}

bool is_learner(const std::string& a) {
  for (const auto& l : kLearners)
    if (l == a) return true;
  return false;
}

// Loads a checkpoint, or trains a single learner when none is given.
mgd_policy* obtain_policy(Config& cfg, const std::string& checkpoint) {
  mgd_policy* p = nullptr;
  if (!checkpoint.empty()) {
    check(mgd_policy_load(checkpoint.c_str(), &p));
    return p;
  }
  mgd_result* r = nullptr;
  check(mgd_run(cfg.p, &r));
  const mgd_status s = mgd_result_policy(r, 0, &p);
  mgd_result_free(r);
  check(s);
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Microgrid dispatch: training, evaluation and analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mgd_version()));

  Common train_opt, eval_opt, trace_opt, sweep_opt, cal_opt;
  std::string train_out = "runs/train", eval_out, eval_ckpt, trace_out = ".", trace_ckpt, sweep_out = "runs/sweep",
              cal_out = ".", cal_ckpt, synth_out;
  double trace_soc = 500.0;
  std::vector<double> ratios{10, 100, 1000, 10000};
  std::uint64_t synth_seed = 1;
  int synth_days = 21;

  auto* train = app.add_subcommand("train", "Train learners, evaluate, write report, curves and checkpoints");
  add_common(train, train_opt, true);
  train->add_option("--out", train_out, "Output directory");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint, or run the configured comparison");
  add_common(evaluate, eval_opt, true);
  evaluate->add_option("--checkpoint", eval_ckpt, "Saved policy directory")->check(CLI::ExistingDirectory);
  evaluate->add_option("--out", eval_out, "Output directory for the comparison artifacts");

  auto* trace = app.add_subcommand("trace", "Write a per-step dispatch trace for one policy");
  add_common(trace, trace_opt, false);
  trace->add_option("--checkpoint", trace_ckpt, "Saved policy directory")->check(CLI::ExistingDirectory);
  trace->add_option("--soc", trace_soc, "Initial state of charge, kWh");
  trace->add_option("--out", trace_out, "Output directory");

  auto* sweep = app.add_subcommand("sweep", "Sweep the unbalance/generation weight ratio k2/k1");
  add_common(sweep, sweep_opt, true);
  sweep->add_option("--ratios", ratios, "k2/k1 ratios")->delimiter(',');
  sweep->add_option("--out", sweep_out, "Output directory");

  auto* calibrate = app.add_subcommand("calibrate", "Compare critic estimates with realized returns");
  add_common(calibrate, cal_opt, false);
  calibrate->add_option("--checkpoint", cal_ckpt, "Saved policy directory")->check(CLI::ExistingDirectory);
  calibrate->add_option("--out", cal_out, "Output directory");

  auto* synth = app.add_subcommand("synth-data", "Write a synthetic hourly load/PV series as CSV");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--days", synth_days, "Number of days")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "Output CSV (default synth_seed<seed>.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return run_experiment(train_opt, train_out);

    if (*evaluate) {
      if (eval_ckpt.empty()) return run_experiment(eval_opt, eval_out);
      Config cfg;
      build(cfg, eval_opt, "");
      mgd_policy* p = nullptr;
      check(mgd_policy_load(eval_ckpt.c_str(), &p));
      char* text = nullptr;
      const mgd_status s = mgd_policy_evaluate(cfg.p, p, &text);
      mgd_policy_free(p);
      check(s);
      print_report(take(text));
      return 0;
    }

    if (*trace) {
      if (trace_opt.algos.empty() && trace_ckpt.empty()) {
        std::fprintf(stderr, "trace: --algo or --checkpoint is required\n");
        return 2;
      }
      Config cfg;
      Common c = trace_opt;
      const std::string algo = c.algos.empty() ? "" : c.algos.front();
      std::filesystem::create_directories(trace_out);
      if (!algo.empty() && !is_learner(algo)) {
        if (!trace_ckpt.empty()) {
          std::fprintf(stderr, "trace: %s is not a learned policy\n", algo.c_str());
          return 2;
        }
        build(cfg, c, "");
        const std::string path = (std::filesystem::path(trace_out) / ("trace_" + algo + ".csv")).string();
        check(mgd_baseline_trace(cfg.p, algo.c_str(), trace_soc, path.c_str()));
        std::printf("%s\n", path.c_str());
        return 0;
      }
      if (c.seeds.size() > 1) c.seeds.resize(1);
      build(cfg, c, "");
      mgd_policy* p = obtain_policy(cfg, trace_ckpt);
      std::string name;
      char* an = nullptr;
      mgd_status s = mgd_policy_algorithm(p, &an);
      if (s == MGD_OK) name = take(an);
      const std::string path = (std::filesystem::path(trace_out) / ("trace_" + name + ".csv")).string();
      if (s == MGD_OK) s = mgd_policy_trace(cfg.p, p, trace_soc, path.c_str());
      mgd_policy_free(p);
      check(s);
      std::printf("%s\n", path.c_str());
      return 0;
    }

    if (*sweep) {
      Config cfg;
      build(cfg, sweep_opt, sweep_out);
      char* text = nullptr;
      check(mgd_sweep(cfg.p, ratios.data(), ratios.size(), &text));
      print_report(take(text));
      return 0;
    }

    if (*calibrate) {
      Common c = cal_opt;
      if (c.algos.empty() && cal_ckpt.empty()) c.algos = {"fh-ddpg"};
      if (!c.algos.empty() && !is_learner(c.algos.front())) {
        std::fprintf(stderr, "calibrate: %s has no critic\n", c.algos.front().c_str());
        return 2;
      }
      if (c.seeds.size() > 1) c.seeds.resize(1);
      Config cfg;
      build(cfg, c, "");
      mgd_policy* p = obtain_policy(cfg, cal_ckpt);
      std::filesystem::create_directories(cal_out);
      const std::string path = (std::filesystem::path(cal_out) / "calibration.csv").string();
      double r = std::nan("");
      const mgd_status s = mgd_policy_calibrate(cfg.p, p, path.c_str(), &r);
      mgd_policy_free(p);
      check(s);
      std::printf("correlation %.6f\n%s\n", r, path.c_str());
      return 0;
    }

    if (*synth) {
      if (synth_out.empty()) synth_out = "synth_seed" + std::to_string(synth_seed) + ".csv";
      check(mgd_synth_data(synth_seed, synth_days, synth_out.c_str()));
      std::printf("%s\n", synth_out.c_str());
      return 0;
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error (%s): %s\n", mgd_status_name(f.status), mgd_last_error());
    return f.status == MGD_ERR_CONFIG || f.status == MGD_ERR_ARGUMENT ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
