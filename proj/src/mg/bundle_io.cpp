#include <cstdio>
#include <fstream>

#include "mg/drl.hpp"
#include "mg/json_io.hpp"

namespace mg::drl {

namespace {

using json_io::Json;

Algo algo_from(const std::string& s) {
  for (Algo a : {Algo::Ddpg, Algo::Rdpg, Algo::FhDdpg, Algo::FhRdpg})
    if (algo_name(a) == s) return a;
  throw IoError("bundle manifest: unknown algorithm '" + s + "'");
}

std::string file_name(const char* role, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%02zu.bin", role, i);
  return buf;
}

}  // namespace

void save_bundle(const PolicyBundle& b, const std::filesystem::path& dir) {
  if (b.actors.empty()) throw ContractViolation("cannot save an empty policy bundle");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  Json m;
  m["format"] = "mg-policy-bundle";
  m["version"] = 1;
  m["algo"] = algo_name(b.algo);
  m["kind"] = b.kind == PolicyBundle::Kind::Stationary ? "stationary" : "time-indexed";
  m["recurrent"] = b.recurrent;
  m["myopic_terminal"] = b.myopic_terminal;
  m["t_steps"] = b.t_steps;
  m["tau"] = b.tau;
  m["seed"] = b.seed;
  m["reward_scale"] = b.reward_scale;
  m["config_hash"] = b.config_hash;
  m["actor_spec"] = json_io::to_json(b.actors.front().spec());
  if (!b.critics.empty()) m["critic_spec"] = json_io::to_json(b.critics.front().spec());
  m["normalization"] = {{"load", json_io::to_json(b.norm.load)},
                        {"pv", json_io::to_json(b.norm.pv)},
                        {"soc", json_io::to_json(b.norm.soc)}};
  m["microgrid"] = json_io::to_json(b.mg);

  // Entries are indexed by the step they serve; stationary bundles use step 0.
  Json actors = Json::array(), critics = Json::array();
  for (std::size_t i = 0; i < b.actors.size(); ++i) {
    const int step = b.kind == PolicyBundle::Kind::Stationary ? 0 : static_cast<int>(i) + 1;
    const std::string af = file_name("actor", static_cast<std::size_t>(step));
    nn::save_params(b.actors[i].params(), dir / af);
    actors.push_back({{"t", step}, {"file", af}});
    if (i < b.critics.size()) {
      const std::string cf = file_name("critic", static_cast<std::size_t>(step));
      nn::save_params(b.critics[i].params(), dir / cf);
      critics.push_back({{"t", step}, {"file", cf}});
    }
  }
  m["actors"] = actors;
  m["critics"] = critics;
  m["terminal_policy"] = b.myopic_terminal ? "myopic" : "actor";

  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << json_io::canonical(m) << '\n';
  if (!out) throw IoError("write failed: " + (dir / "manifest.json").string());
}

PolicyBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
  Json m;
  try {
    m = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bundle manifest: ") + e.what());
  }
  try {
    if (m.at("format").get<std::string>() != "mg-policy-bundle" || m.at("version").get<int>() != 1)
      throw IoError("bundle manifest: unsupported format or version");
    PolicyBundle b;
    b.algo = algo_from(m.at("algo").get<std::string>());
    b.kind = m.at("kind").get<std::string>() == "stationary" ? PolicyBundle::Kind::Stationary
                                                            : PolicyBundle::Kind::TimeIndexed;
    b.recurrent = m.at("recurrent").get<bool>();
    b.myopic_terminal = m.at("myopic_terminal").get<bool>();
    b.t_steps = m.at("t_steps").get<int>();
    b.tau = m.at("tau").get<int>();
    b.seed = m.at("seed").get<std::uint64_t>();
    b.reward_scale = m.at("reward_scale").get<double>();
    b.config_hash = m.at("config_hash").get<std::string>();
    const auto& nm = m.at("normalization");
    b.norm.load = json_io::range_from_json(nm.at("load"), "normalization.load");
    b.norm.pv = json_io::range_from_json(nm.at("pv"), "normalization.pv");
    b.norm.soc = json_io::range_from_json(nm.at("soc"), "normalization.soc");
    b.mg = json_io::microgrid_from_json(m.at("microgrid"));
    const nn::NetSpec aspec = json_io::spec_from_json(m.at("actor_spec"));
    for (const auto& e : m.at("actors")) {
      nn::Network net(aspec);
      nn::ParamSet p = nn::load_params(dir / e.at("file").get<std::string>());
      if (!p.same_layout(net.params())) throw IoError("bundle: actor file does not match the manifest spec");
      nn::copy_params(net.params(), p);
      b.actors.push_back(std::move(net));
    }
    if (m.contains("critic_spec")) {
      const nn::NetSpec cspec = json_io::spec_from_json(m.at("critic_spec"));
      for (const auto& e : m.at("critics")) {
        nn::Network net(cspec);
        nn::ParamSet p = nn::load_params(dir / e.at("file").get<std::string>());
        if (!p.same_layout(net.params())) throw IoError("bundle: critic file does not match the manifest spec");
        nn::copy_params(net.params(), p);
        b.critics.push_back(std::move(net));
      }
    }
    const std::size_t expect = b.kind == PolicyBundle::Kind::Stationary
                                   ? 1
                                   : static_cast<std::size_t>(b.t_steps - (b.myopic_terminal ? 1 : 0));
    if (b.actors.size() != expect)
      throw IoError("bundle: manifest lists " + std::to_string(b.actors.size()) + " actors, expected " +
                    std::to_string(expect));
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bundle manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("bundle manifest: ") + e.what());
  }
}

}  // namespace mg::drl
