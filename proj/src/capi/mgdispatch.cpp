#include "mgdispatch/mgdispatch.h"

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <sstream>
#include <string>

#include "mg/errors.hpp"
#include "mg/harness.hpp"

struct mgd_config {
  mg::harness::RunConfig cfg;
};

struct mgd_result {
  mg::harness::ExperimentResult res;
};

struct mgd_policy {
  mg::drl::PolicyBundle bundle;
};

namespace {

using mg::json_io::Json;
namespace h = mg::harness;

thread_local std::string g_error;

mgd_status fail(mgd_status s, const std::string& msg) {
  g_error = msg;
  return s;
}

template <class F>
mgd_status guarded(F&& f) {
  try {
    g_error.clear();
    f();
    return MGD_OK;
  } catch (const mg::ConfigError& e) {
    return fail(MGD_ERR_CONFIG, e.what());
  } catch (const mg::IoError& e) {
    return fail(MGD_ERR_IO, e.what());
  } catch (const mg::DataError& e) {
    return fail(MGD_ERR_DATA, e.what());
  } catch (const mg::DivergenceError& e) {
    return fail(MGD_ERR_DIVERGED, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(MGD_ERR_CONFIG, e.what());
  } catch (const mg::ContractViolation& e) {
    return fail(MGD_ERR_INTERNAL, std::string("contract violation: ") + e.what());
  } catch (const std::exception& e) {
    return fail(MGD_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MGD_ERR_INTERNAL, "unknown exception");
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

struct ArgError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class... P>
void need(const P*... ptrs) {
  if (((ptrs == nullptr) || ...)) throw ArgError("null argument");
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw mg::ConfigError("empty list item in '" + s + "'");
    out.push_back(item.substr(b, e - b + 1));
  }
  if (out.empty()) throw mg::ConfigError("empty list");
  return out;
}

std::uint64_t parse_u64(const std::string& s) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || errno != 0 || s[0] == '-') throw mg::ConfigError("not a seed: '" + s + "'");
  return v;
}

// Argument errors come first; everything else goes through the shared mapping.
template <class F>
mgd_status entry(F&& f) {
  try {
    f();
    g_error.clear();
    return MGD_OK;
  } catch (const ArgError& e) {
    return fail(MGD_ERR_ARGUMENT, e.what());
  } catch (...) {
    return guarded([] { throw; });
  }
}

}  // namespace

extern "C" {

const char* mgd_version(void) { return "1.0.0"; }

const char* mgd_last_error(void) { return g_error.c_str(); }

const char* mgd_status_name(mgd_status s) {
  switch (s) {
    case MGD_OK: return "ok";
    case MGD_ERR_ARGUMENT: return "invalid argument";
    case MGD_ERR_CONFIG: return "configuration error";
    case MGD_ERR_IO: return "i/o error";
    case MGD_ERR_DATA: return "data error";
    case MGD_ERR_DIVERGED: return "training diverged";
    case MGD_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void mgd_string_free(char* s) { std::free(s); }

mgd_status mgd_config_default(mgd_config** out) {
  return entry([&] {
    need(out);
    *out = new mgd_config{};
  });
}

mgd_status mgd_config_load(const char* path, mgd_config** out) {
  return entry([&] {
    need(path, out);
    *out = nullptr;
    auto c = h::load_config(path);
    *out = new mgd_config{std::move(c)};
  });
}

mgd_status mgd_config_parse(const char* json_text, mgd_config** out) {
  return entry([&] {
    need(json_text, out);
    *out = nullptr;
    Json j;
    try {
      j = Json::parse(json_text, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
      throw mg::ConfigError(std::string("config: ") + e.what());
    }
    *out = new mgd_config{h::config_from_json(j)};
  });
}

void mgd_config_free(mgd_config* cfg) { delete cfg; }

mgd_status mgd_config_set(mgd_config* cfg, const char* key, const char* value) {
  return entry([&] {
    need(cfg, key, value);
    h::RunConfig c = cfg->cfg;
    const std::string k = key, v = value;
    if (k == "case") {
      c.case_id = h::case_from(v);
    } else if (k == "algorithms") {
      c.algorithms.clear();
      for (const auto& a : split(v)) c.algorithms.push_back(h::algo_from(a));
    } else if (k == "seeds") {
      c.seeds.clear();
      for (const auto& s : split(v)) c.seeds.push_back(parse_u64(s));
    } else if (k == "output") {
      c.output_dir = v;
    } else if (k == "episodes") {
      const std::uint64_t n = parse_u64(v);
      if (n < 1 || n > 1000000) throw mg::ConfigError("episodes must be between 1 and 1000000");
      c.eval_episodes = static_cast<int>(n);
    } else if (k == "checkpoints") {
      if (v != "true" && v != "false") throw mg::ConfigError("checkpoints must be true or false");
      c.write_checkpoints = v == "true";
    } else {
      throw mg::ConfigError("unknown setting '" + k + "'");
    }
    cfg->cfg = std::move(c);
  });
}

mgd_status mgd_config_validate(const mgd_config* cfg) {
  return entry([&] {
    need(cfg);
    cfg->cfg.validate();
  });
}

mgd_status mgd_config_to_json(const mgd_config* cfg, char** out) {
  return entry([&] {
    need(cfg, out);
    *out = dup(mg::json_io::canonical(h::to_json(cfg->cfg)));
  });
}

mgd_status mgd_config_hash(const mgd_config* cfg, char** out) {
  return entry([&] {
    need(cfg, out);
    *out = dup(h::config_hash(cfg->cfg));
  });
}

mgd_status mgd_run(const mgd_config* cfg, mgd_result** out) {
  return entry([&] {
    need(cfg, out);
    *out = nullptr;
    auto r = h::run_experiment(cfg->cfg);
    *out = new mgd_result{std::move(r)};
  });
}

void mgd_result_free(mgd_result* r) { delete r; }

mgd_status mgd_result_report_json(const mgd_result* r, char** out) {
  return entry([&] {
    need(r, out);
    *out = dup(mg::json_io::canonical(r->res.report.to_json()));
  });
}

mgd_status mgd_result_policy_count(const mgd_result* r, size_t* out) {
  return entry([&] {
    need(r, out);
    *out = r->res.policies.size();
  });
}

mgd_status mgd_result_policy(const mgd_result* r, size_t i, mgd_policy** out) {
  return entry([&] {
    need(r, out);
    if (i >= r->res.policies.size()) throw ArgError("policy index out of range");
    *out = new mgd_policy{r->res.policies[i].bundle};
  });
}

mgd_status mgd_sweep(const mgd_config* cfg, const double* ratios, size_t n, char** out_json) {
  return entry([&] {
    need(cfg, ratios, out_json);
    const auto sweep = h::sweep_k_ratio(cfg->cfg, std::vector<double>(ratios, ratios + n));
    const std::string text = mg::json_io::canonical(h::sweep_to_json(sweep));
    if (!cfg->cfg.output_dir.empty())
      h::write_text(std::filesystem::path(cfg->cfg.output_dir) / "sweep.json", text + "\n");
    *out_json = dup(text);
  });
}

mgd_status mgd_policy_load(const char* dir, mgd_policy** out) {
  return entry([&] {
    need(dir, out);
    *out = nullptr;
    auto b = mg::drl::load_bundle(dir);
    *out = new mgd_policy{std::move(b)};
  });
}

mgd_status mgd_policy_save(const mgd_policy* p, const char* dir) {
  return entry([&] {
    need(p, dir);
    mg::drl::save_bundle(p->bundle, dir);
  });
}

void mgd_policy_free(mgd_policy* p) { delete p; }

mgd_status mgd_policy_algorithm(const mgd_policy* p, char** out) {
  return entry([&] {
    need(p, out);
    *out = dup(mg::drl::algo_name(p->bundle.algo));
  });
}

mgd_status mgd_policy_seed(const mgd_policy* p, uint64_t* out) {
  return entry([&] {
    need(p, out);
    *out = p->bundle.seed;
  });
}

mgd_status mgd_policy_actor_count(const mgd_policy* p, size_t* out) {
  return entry([&] {
    need(p, out);
    *out = p->bundle.actors.size();
  });
}

mgd_status mgd_policy_evaluate(const mgd_config* cfg, const mgd_policy* p, char** out_json) {
  return entry([&] {
    need(cfg, p, out_json);
    const h::RunResult r = h::evaluate_bundle(cfg->cfg, p->bundle);
    Json j;
    j["algorithm"] = mg::drl::algo_name(p->bundle.algo);
    j["seed"] = p->bundle.seed;
    j["eval_episodes"] = cfg->cfg.eval_episodes;
    j["return"] = r.mean_return;
    j["c_dg"] = r.c_dg;
    j["c_us"] = r.c_us;
    *out_json = dup(mg::json_io::canonical(j));
  });
}

mgd_status mgd_policy_trace(const mgd_config* cfg, const mgd_policy* p, double soc0, const char* csv_path) {
  return entry([&] {
    need(cfg, p, csv_path);
    h::export_trace(h::policy_trace(cfg->cfg, p->bundle, soc0), csv_path);
  });
}

mgd_status mgd_baseline_trace(const mgd_config* cfg, const char* algorithm, double soc0, const char* csv_path) {
  return entry([&] {
    need(cfg, algorithm, csv_path);
    h::export_trace(h::baseline_trace(cfg->cfg, h::algo_from(algorithm), soc0), csv_path);
  });
}

mgd_status mgd_policy_calibrate(const mgd_config* cfg, const mgd_policy* p, const char* csv_path,
                                double* correlation) {
  return entry([&] {
    need(cfg, p, csv_path, correlation);
    const auto pts = h::calibrate_bundle(cfg->cfg, p->bundle);
    h::write_calibration(pts, csv_path);
    *correlation = h::correlation(pts);
  });
}

mgd_status mgd_synth_data(uint64_t seed, int days, const char* csv_path) {
  return entry([&] {
    need(csv_path);
    if (days < 1) throw ArgError("days must be positive");
    mg::HorizonConfig hz;
    const auto series =
        mg::data::synth_series(seed, days, mg::data::parse_timestamp("2024-01-01T00:00"), hz, mg::data::ProfileShape{});
    mg::data::write_series(series, csv_path);
  });
}

}  // extern "C"
