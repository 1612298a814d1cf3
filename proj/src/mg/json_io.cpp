#include "mg/json_io.hpp"

#include <cstdint>
#include <cstdio>

#include "mg/errors.hpp"

namespace mg::json_io {

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == it.key();
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

namespace {

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

}  // namespace

Json to_json(const Range& r) { return Json::array({r.lo, r.hi}); }

Range range_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ConfigError(where + ": expected [lo, hi]");
  Range r{j[0].get<double>(), j[1].get<double>()};
  if (!(r.lo < r.hi)) throw ConfigError(where + ": need lo < hi");
  return r;
}

Json to_json(const MicrogridConfig& c) {
  Json j;
  j["battery"] = {{"p_max", c.battery.p_max},
                  {"e_max", c.battery.e_max},
                  {"e_min", c.battery.e_min},
                  {"eta_ch", c.battery.eta_ch},
                  {"eta_dis", c.battery.eta_dis}};
  j["dg"] = {{"p_min", c.dg.p_min}, {"p_max", c.dg.p_max}, {"a", c.dg.a}, {"b", c.dg.b}, {"c", c.dg.c}};
  j["weights"] = {{"k1", c.weights.k1}, {"k2", c.weights.k2}, {"k21", c.weights.k21}, {"k22", c.weights.k22}};
  j["horizon"] = {{"t_steps", c.horizon.t_steps},
                  {"delta_t", c.horizon.delta_t},
                  {"tau", c.horizon.tau},
                  {"gamma", c.horizon.gamma}};
  j["load_range"] = to_json(c.load_range);
  j["pv_range"] = to_json(c.pv_range);
  return j;
}

MicrogridConfig microgrid_from_json(const Json& j, MicrogridConfig c) {
  const std::string w = "microgrid";
  check_keys(j, {"battery", "dg", "weights", "horizon", "load_range", "pv_range"}, w);
  if (auto it = j.find("battery"); it != j.end()) {
    check_keys(*it, {"p_max", "e_max", "e_min", "eta_ch", "eta_dis"}, w + ".battery");
    read(*it, "p_max", c.battery.p_max, w + ".battery");
    read(*it, "e_max", c.battery.e_max, w + ".battery");
    read(*it, "e_min", c.battery.e_min, w + ".battery");
    read(*it, "eta_ch", c.battery.eta_ch, w + ".battery");
    read(*it, "eta_dis", c.battery.eta_dis, w + ".battery");
  }
  if (auto it = j.find("dg"); it != j.end()) {
    check_keys(*it, {"p_min", "p_max", "a", "b", "c"}, w + ".dg");
    read(*it, "p_min", c.dg.p_min, w + ".dg");
    read(*it, "p_max", c.dg.p_max, w + ".dg");
    read(*it, "a", c.dg.a, w + ".dg");
    read(*it, "b", c.dg.b, w + ".dg");
    read(*it, "c", c.dg.c, w + ".dg");
  }
  if (auto it = j.find("weights"); it != j.end()) {
    check_keys(*it, {"k1", "k2", "k21", "k22"}, w + ".weights");
    read(*it, "k1", c.weights.k1, w + ".weights");
    read(*it, "k2", c.weights.k2, w + ".weights");
    read(*it, "k21", c.weights.k21, w + ".weights");
    read(*it, "k22", c.weights.k22, w + ".weights");
  }
  if (auto it = j.find("horizon"); it != j.end()) {
    check_keys(*it, {"t_steps", "delta_t", "tau", "gamma"}, w + ".horizon");
    read(*it, "t_steps", c.horizon.t_steps, w + ".horizon");
    read(*it, "delta_t", c.horizon.delta_t, w + ".horizon");
    read(*it, "tau", c.horizon.tau, w + ".horizon");
    read(*it, "gamma", c.horizon.gamma, w + ".horizon");
  }
  if (auto it = j.find("load_range"); it != j.end()) c.load_range = range_from_json(*it, w + ".load_range");
  if (auto it = j.find("pv_range"); it != j.end()) c.pv_range = range_from_json(*it, w + ".pv_range");
  c.validate();
  return c;
}

Json to_json(const drl::TrainConfig& c) {
  Json j;
  j["actor_hidden"] = c.actor_hidden;
  j["critic_hidden"] = c.critic_hidden;
  j["critic_action_layer"] = c.critic_action_layer;
  j["actor_lstm"] = c.actor_lstm;
  j["actor_head"] = c.actor_head;
  j["critic_lstm"] = c.critic_lstm;
  j["critic_head"] = c.critic_head;
  j["actor_lr"] = c.actor_lr;
  j["critic_lr"] = c.critic_lr;
  j["batch"] = c.batch;
  j["buffer_capacity"] = c.buffer_capacity;
  j["reward_scale"] = c.reward_scale;
  j["soft_update"] = c.soft_update;
  j["ou_theta"] = c.ou_theta;
  j["ou_sigma"] = c.ou_sigma;
  j["episodes_per_step"] = c.episodes_per_step;
  j["episodes"] = c.episodes;
  j["warmup_transitions"] = c.warmup_transitions;
  j["eval_period"] = c.eval_period;
  j["eval_episodes"] = c.eval_episodes;
  j["seed"] = c.seed;
  return j;
}

drl::TrainConfig train_from_json(const Json& j, drl::TrainConfig c) {
  const std::string w = "training";
  check_keys(j,
             {"actor_hidden", "critic_hidden", "critic_action_layer", "actor_lstm", "actor_head", "critic_lstm",
              "critic_head", "actor_lr", "critic_lr", "batch", "buffer_capacity", "reward_scale", "soft_update",
              "ou_theta", "ou_sigma", "episodes_per_step", "episodes", "warmup_transitions", "eval_period",
              "eval_episodes", "seed"},
             w);
  read(j, "actor_hidden", c.actor_hidden, w);
  read(j, "critic_hidden", c.critic_hidden, w);
  read(j, "critic_action_layer", c.critic_action_layer, w);
  read(j, "actor_lstm", c.actor_lstm, w);
  read(j, "actor_head", c.actor_head, w);
  read(j, "critic_lstm", c.critic_lstm, w);
  read(j, "critic_head", c.critic_head, w);
  read(j, "actor_lr", c.actor_lr, w);
  read(j, "critic_lr", c.critic_lr, w);
  read(j, "batch", c.batch, w);
  read(j, "buffer_capacity", c.buffer_capacity, w);
  read(j, "reward_scale", c.reward_scale, w);
  read(j, "soft_update", c.soft_update, w);
  read(j, "ou_theta", c.ou_theta, w);
  read(j, "ou_sigma", c.ou_sigma, w);
  read(j, "episodes_per_step", c.episodes_per_step, w);
  read(j, "episodes", c.episodes, w);
  read(j, "warmup_transitions", c.warmup_transitions, w);
  read(j, "eval_period", c.eval_period, w);
  read(j, "eval_episodes", c.eval_episodes, w);
  read(j, "seed", c.seed, w);
  c.validate();
  return c;
}

namespace {

const char* act_name(nn::Activation a) { return a == nn::Activation::Tanh ? "tanh" : "identity"; }

nn::Activation act_from(const Json& j) {
  const auto s = j.get<std::string>();
  if (s == "tanh") return nn::Activation::Tanh;
  if (s == "identity") return nn::Activation::Identity;
  throw ConfigError("spec: unknown activation '" + s + "'");
}

}  // namespace

Json to_json(const nn::NetSpec& spec) {
  Json j;
  if (const auto* m = std::get_if<nn::MlpSpec>(&spec)) {
    j["type"] = "mlp";
    j["input"] = m->input;
    j["hidden"] = m->hidden;
    j["output"] = m->output;
    j["output_act"] = act_name(m->output_act);
    j["aux_width"] = m->aux_width;
    j["aux_layer"] = m->aux_layer;
  } else {
    const auto& r = std::get<nn::RecurrentSpec>(spec);
    j["type"] = "recurrent";
    j["seq_width"] = r.seq_width;
    j["lstm"] = r.lstm;
    j["static_width"] = r.static_width;
    j["head"] = r.head;
    j["output"] = r.output;
    j["output_act"] = act_name(r.output_act);
    j["aux_width"] = r.aux_width;
  }
  return j;
}

nn::NetSpec spec_from_json(const Json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    if (type == "mlp") {
      check_keys(j, {"type", "input", "hidden", "output", "output_act", "aux_width", "aux_layer"}, "spec");
      nn::MlpSpec m;
      m.input = j.at("input").get<int>();
      m.hidden = j.at("hidden").get<std::vector<int>>();
      m.output = j.at("output").get<int>();
      m.output_act = act_from(j.at("output_act"));
      m.aux_width = j.at("aux_width").get<int>();
      m.aux_layer = j.at("aux_layer").get<int>();
      m.validate();
      return m;
    }
    if (type == "recurrent") {
      check_keys(j, {"type", "seq_width", "lstm", "static_width", "head", "output", "output_act", "aux_width"},
                 "spec");
      nn::RecurrentSpec r;
      r.seq_width = j.at("seq_width").get<int>();
      r.lstm = j.at("lstm").get<std::vector<int>>();
      r.static_width = j.at("static_width").get<int>();
      r.head = j.at("head").get<std::vector<int>>();
      r.output = j.at("output").get<int>();
      r.output_act = act_from(j.at("output_act"));
      r.aux_width = j.at("aux_width").get<int>();
      r.validate();
      return r;
    }
    throw ConfigError("spec: unknown type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("spec: ") + e.what());
  }
}

std::string canonical(const Json& j) { return j.dump(2); }

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mg::json_io
