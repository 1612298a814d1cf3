#include "mg/drl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mg/baselines.hpp"
#include "mg/json_io.hpp"

namespace mg::drl {

using nn::Matrix;
using nn::NetInput;
using nn::Network;

std::string algo_name(Algo a) {
  switch (a) {
    case Algo::Ddpg: return "ddpg";
    case Algo::Rdpg: return "rdpg";
    case Algo::FhDdpg: return "fh-ddpg";
    case Algo::FhRdpg: return "fh-rdpg";
  }
  return "?";
}

bool is_recurrent(Algo a) { return a == Algo::Rdpg || a == Algo::FhRdpg; }
bool is_finite_horizon(Algo a) { return a == Algo::FhDdpg || a == Algo::FhRdpg; }

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("training: ") + what);
  };
  auto widths_ok = [](const std::vector<int>& v) {
    return std::all_of(v.begin(), v.end(), [](int w) { return w >= 1; });
  };
  need(!actor_hidden.empty() && widths_ok(actor_hidden), "actor_hidden needs positive widths");
  need(!critic_hidden.empty() && widths_ok(critic_hidden), "critic_hidden needs positive widths");
  need(critic_action_layer >= 0 && critic_action_layer <= static_cast<int>(critic_hidden.size()),
       "critic_action_layer out of range");
  need(!actor_lstm.empty() && widths_ok(actor_lstm) && widths_ok(actor_head), "actor recurrent widths");
  need(!critic_lstm.empty() && widths_ok(critic_lstm) && widths_ok(critic_head), "critic recurrent widths");
  need(actor_lr > 0.0 && critic_lr > 0.0, "learning rates must be positive");
  need(batch >= 1, "batch must be >= 1");
  need(buffer_capacity >= batch, "buffer_capacity must be >= batch");
  need(reward_scale > 0.0, "reward_scale must be positive");
  need(soft_update > 0.0 && soft_update <= 1.0, "soft_update must lie in (0, 1]");
  need(ou_theta >= 0.0 && ou_sigma >= 0.0, "noise parameters must be non-negative");
  need(episodes_per_step >= 1 && episodes >= 1, "episode counts must be >= 1");
  need(warmup_transitions >= batch, "warmup_transitions must be >= batch");
  need(eval_period >= 1 && eval_episodes >= 0, "evaluation period must be >= 1");
}

TrainConfig full_preset(Algo a) {
  TrainConfig c;
  c.batch = 128;
  c.buffer_capacity = 20000;
  c.reward_scale = 2e-3;
  c.soft_update = 0.001;
  c.ou_theta = 0.15;
  c.ou_sigma = 0.5;
  c.warmup_transitions = 1280;
  c.critic_action_layer = 1;
  switch (a) {
    case Algo::FhDdpg:
      c.actor_hidden = c.critic_hidden = {400, 300, 100};
      c.actor_lr = 5e-6;
      c.critic_lr = 5e-5;
      break;
    case Algo::FhRdpg:
      c.actor_lstm = c.critic_lstm = {128};
      c.actor_head = c.critic_head = {128, 64};
      c.actor_lr = 5e-6;
      c.critic_lr = 5e-5;
      break;
    case Algo::Ddpg:
      c.actor_hidden = c.critic_hidden = {256, 128};
      c.actor_lr = 1e-6;
      c.critic_lr = 1e-5;
      break;
    case Algo::Rdpg:
      c.actor_lstm = c.critic_lstm = {128};
      c.actor_head = c.critic_head = {128};
      c.actor_lr = 1e-6;
      c.critic_lr = 1e-5;
      break;
  }
  c.episodes_per_step = 5000;
  c.episodes = 5000;
  return c;
}

TrainConfig desk_preset(Algo a) {
  TrainConfig c;
  c.actor_hidden = {64, 48, 32};
  c.critic_hidden = {64, 48, 32};
  c.actor_lstm = c.critic_lstm = {32};
  c.actor_head = {32};
  c.critic_head = {48, 32};
  c.actor_lr = 1e-4;
  c.critic_lr = 1e-3;
  c.batch = 64;
  c.warmup_transitions = 640;
  c.soft_update = 0.005;
  c.episodes_per_step = 3000;
  c.episodes = 1500;
  // The per-step problems are small; a faster actor pays off there.
  if (is_finite_horizon(a)) {
    c.actor_lr = 1e-3;
    // Each step starts from an empty buffer; two batches are enough to begin.
    c.warmup_transitions = 2 * c.batch;
  }
  return c;
}

// ---------------------------------------------------------------------------

Normalizer make_normalizer(const MicrogridConfig& cfg, const data::EpisodeSource& src) {
  Normalizer n;
  n.load = src.load_range();
  n.pv = src.pv_range();
  // A flat series (e.g. PV at night only) would give a zero-width range.
  if (!(n.load.width() > 0.0)) n.load = cfg.load_range;
  if (!(n.pv.width() > 0.0)) n.pv = cfg.pv_range;
  n.soc = Range{cfg.battery.e_min, cfg.battery.e_max};
  return n;
}

State make_state(const data::DayProfile& day, int t, double soc) {
  const LoadPv& p = day.at_step(t);
  return State{p.load, p.pv, soc};
}

History make_history(const data::DayProfile& day, int t, double soc, int tau) {
  History h;
  h.window.reserve(static_cast<std::size_t>(tau - 1));
  for (int k = t - tau; k <= t - 2; ++k) h.window.push_back(day.at_offset(k));
  h.head = make_observation(day.at_offset(t - 1), soc);
  return h;
}

double to_power(double a, const DGParams& dg) {
  const double u = std::clamp(a, -1.0, 1.0);
  return std::clamp(dg.p_min + 0.5 * (u + 1.0) * (dg.p_max - dg.p_min), dg.p_min, dg.p_max);
}

double to_unit(double p, const DGParams& dg) { return 2.0 * (p - dg.p_min) / (dg.p_max - dg.p_min) - 1.0; }

namespace {

// ---------------------------------------------------------------------------
// Observation traits: how each information mode encodes inputs and steps.

struct MdpObs {
  using Obs = State;

  static NetInput encode(const std::vector<const Obs*>& batch, const Normalizer& n) {
    NetInput in;
    in.x.resize(3, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      in.x(0, c) = n.load_n(batch[i]->p_load);
      in.x(1, c) = n.pv_n(batch[i]->p_pv);
      in.x(2, c) = n.soc_n(batch[i]->soc);
    }
    return in;
  }
  static Obs make(const data::DayProfile& day, int t, double soc, int) { return make_state(day, t, soc); }
  static Obs next(const Obs&, const data::DayProfile& day, int t, double next_soc, int) {
    return make_state(day, t + 1, next_soc);
  }
  static const Obs& from(const PolicyInput& in) { return in.state; }
};

struct PomdpObs {
  using Obs = History;

  static NetInput encode(const std::vector<const Obs*>& batch, const Normalizer& n) {
    NetInput in;
    const auto b = static_cast<Eigen::Index>(batch.size());
    const int tau = batch.empty() ? 1 : batch[0]->tau();
    in.seq.assign(static_cast<std::size_t>(tau), Matrix(2, b));
    in.x.resize(1, b);
    for (Eigen::Index c = 0; c < b; ++c) {
      const History& h = *batch[static_cast<std::size_t>(c)];
      if (h.tau() != tau) throw ContractViolation("history batch with mixed window lengths");
      for (int k = 0; k < tau - 1; ++k) {
        in.seq[static_cast<std::size_t>(k)](0, c) = n.load_n(h.window[static_cast<std::size_t>(k)].load);
        in.seq[static_cast<std::size_t>(k)](1, c) = n.pv_n(h.window[static_cast<std::size_t>(k)].pv);
      }
      in.seq.back()(0, c) = n.load_n(h.head.p_load_prev);
      in.seq.back()(1, c) = n.pv_n(h.head.p_pv_prev);
      in.x(0, c) = n.soc_n(h.head.soc);
    }
    return in;
  }
  static Obs make(const data::DayProfile& day, int t, double soc, int tau) { return make_history(day, t, soc, tau); }
  // h_{t+1} from h_t and o_{t+1} = (pair t, E_{t+1}).
  static Obs next(const Obs& h, const data::DayProfile& day, int t, double next_soc, int) {
    return advance_history(h, make_observation(day.at_step(t), next_soc));
  }
  static const Obs& from(const PolicyInput& in) { return in.history; }
};

template <class Traits>
struct Transition {
  typename Traits::Obs obs;
  double a = 0.0;  // executed action in [-1, 1]
  double r = 0.0;  // raw reward
  typename Traits::Obs next;
  State next_state;  // full next state, for the myopic terminal target
  bool terminal = false;
  int t = 0;
};

template <class Traits>
nn::NetSpec actor_spec(const TrainConfig& tc) {
  if constexpr (std::is_same_v<Traits, MdpObs>) {
    return nn::MlpSpec{3, tc.actor_hidden, 1, nn::Activation::Tanh, 0, 1};
  } else {
    return nn::RecurrentSpec{2, tc.actor_lstm, 1, tc.actor_head, 1, nn::Activation::Tanh, 0};
  }
}

template <class Traits>
nn::NetSpec critic_spec(const TrainConfig& tc) {
  if constexpr (std::is_same_v<Traits, MdpObs>) {
    return nn::MlpSpec{3, tc.critic_hidden, 1, nn::Activation::Identity, 1, tc.critic_action_layer};
  } else {
    return nn::RecurrentSpec{2, tc.critic_lstm, 1, tc.critic_head, 1, nn::Activation::Identity, 1};
  }
}

NetInput with_aux(NetInput in, Matrix aux) {
  in.aux = std::move(aux);
  return in;
}

// Working actor/critic pair with target copies and optimizers.
struct Learner {
  Network actor, critic, actor_target, critic_target;
  nn::Optimizer actor_opt, critic_opt;

  Learner(nn::NetSpec a, nn::NetSpec c) : actor(a), critic(c), actor_target(a), critic_target(c) {}

  void reset_optimizers(const TrainConfig& tc) {
    actor_opt = nn::Optimizer(nn::OptimizerConfig{tc.actor_lr}, actor.params().size());
    critic_opt = nn::Optimizer(nn::OptimizerConfig{tc.critic_lr}, critic.params().size());
  }

  // Q'(x', mu'(x')) from the target pair.
  Matrix target_q(const NetInput& next) const {
    Matrix a = actor_target.predict(next);
    return critic_target.predict(with_aux(next, std::move(a)));
  }

  double update_critic(const NetInput& x, const Matrix& a, const Matrix& y) {
    NetInput in = with_aux(x, a);
    const Matrix q = critic.forward(in);
    const Matrix diff = q - y;
    const double b = static_cast<double>(y.cols());
    const double loss = diff.squaredNorm() / b;
    critic.params().zero_grad();
    critic.backward(2.0 * diff / b);
    critic_opt.step(critic.params());
    return loss;
  }

  void update_actor(const NetInput& x) {
    const Matrix a = actor.forward(x);
    NetInput in = with_aux(x, a);
    critic.forward(in);
    const double b = static_cast<double>(a.cols());
    const nn::InputGrad g = critic.backward(Matrix::Constant(1, a.cols(), -1.0 / b), false);
    actor.params().zero_grad();
    actor.backward(g.aux);
    actor_opt.step(actor.params());
  }
};

double actor_action(const Network& actor, const NetInput& in) { return actor.predict(in)(0, 0); }

const data::DayProfile& pick_day(const data::EpisodeSource& src, std::mt19937_64& rng) {
  if (src.training.size() == 1) return src.training[0];
  std::uniform_int_distribution<std::size_t> d(0, src.training.size() - 1);
  return src.training[d(rng)];
}

void check_finite(double loss, const Learner& l, const std::string& where, int step) {
  if (!std::isfinite(loss) || !l.critic.params().all_finite() || !l.actor.params().all_finite())
    throw DivergenceError("non-finite loss or parameters during " + where, step);
}

std::vector<double> eval_socs(const data::EpisodeSource& src, const BatteryParams& bat, std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed ^ 0x5eedf00dULL);
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(data::sample_initial_soc(src.initial_soc, bat, rng));
  return out;
}

template <class Traits>
PolicyBundle make_bundle(Algo algo, const MicrogridConfig& cfg, const Normalizer& norm, const TrainConfig& tc) {
  PolicyBundle b;
  b.algo = algo;
  b.kind = is_finite_horizon(algo) ? PolicyBundle::Kind::TimeIndexed : PolicyBundle::Kind::Stationary;
  b.recurrent = std::is_same_v<Traits, PomdpObs>;
  b.myopic_terminal = algo == Algo::FhDdpg;
  b.t_steps = cfg.horizon.t_steps;
  b.tau = cfg.horizon.tau;
  b.norm = norm;
  b.mg = cfg;
  b.seed = tc.seed;
  b.reward_scale = tc.reward_scale;
  b.config_hash = json_io::fnv1a_hex(json_io::canonical(json_io::to_json(tc)) + json_io::canonical(json_io::to_json(cfg)));
  return b;
}

struct Seeds {
  std::uint64_t init, env, noise, sample;
};

Seeds derive(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6d67u};
  std::array<std::uint32_t, 8> v{};
  seq.generate(v.begin(), v.end());
  auto join = [&](int i) { return (static_cast<std::uint64_t>(v[2 * i]) << 32) | v[2 * i + 1]; };
  return {join(0), join(1), join(2), join(3)};
}

// ---------------------------------------------------------------------------
// Stationary trainer (DDPG / RDPG) over full-horizon episodes.

template <class Traits>
TrainResult train_stationary(Algo algo, const MicrogridConfig& cfg, const data::EpisodeSource& src,
                             const TrainConfig& tc, const TrainHooks& hooks) {
  cfg.validate();
  src.validate(cfg.horizon);
  tc.validate();
  using Tr = Transition<Traits>;
  const Seeds sd = derive(tc.seed);
  const Normalizer norm = make_normalizer(cfg, src);
  const int T = cfg.horizon.t_steps;
  const int tau = cfg.horizon.tau;
  const double gamma = cfg.horizon.gamma;

  Learner L(actor_spec<Traits>(tc), critic_spec<Traits>(tc));
  std::mt19937_64 init_rng(sd.init);
  L.actor.init(init_rng);
  L.critic.init(init_rng);
  nn::copy_params(L.actor_target.params(), L.actor.params());
  nn::copy_params(L.critic_target.params(), L.critic.params());
  L.reset_optimizers(tc);

  std::mt19937_64 env_rng(sd.env), sample_rng(sd.sample);
  OUProcess ou(tc.ou_theta, tc.ou_sigma, sd.noise);
  ReplayBuffer<Tr> buffer(static_cast<std::size_t>(tc.buffer_capacity));
  const auto snap_socs = eval_socs(src, cfg.battery, tc.seed, tc.eval_episodes);

  TrainResult res;
  res.bundle = make_bundle<Traits>(algo, cfg, norm, tc);
  double loss_sum = 0.0;
  int loss_n = 0;
  double q_last = std::numeric_limits<double>::quiet_NaN();

  for (int ep = 0; ep < tc.episodes; ++ep) {
    const data::DayProfile& day = pick_day(src, env_rng);
    double soc = data::sample_initial_soc(src.initial_soc, cfg.battery, env_rng);
    ou.reset();
    auto obs = Traits::make(day, 1, soc, tau);
    for (int t = 1; t <= T; ++t) {
      const NetInput in = Traits::encode({&obs}, norm);
      const double a = std::clamp(actor_action(L.actor, in) + ou.sample(), -1.0, 1.0);
      const StepOutcome out = evaluate_step(make_state(day, t, soc), to_power(a, cfg.dg), cfg);
      Tr tr;
      tr.obs = obs;
      tr.a = a;
      tr.r = out.reward;
      tr.terminal = t == T;
      tr.t = t;
      if (t < T) tr.next = Traits::next(obs, day, t, out.next_soc, tau);
      buffer.push(tr);
      if (t < T) obs = tr.next;
      soc = out.next_soc;

      if (buffer.size() < static_cast<std::size_t>(tc.warmup_transitions)) continue;
      const auto batch = buffer.sample(static_cast<std::size_t>(tc.batch), sample_rng);
      std::vector<const typename Traits::Obs*> xs, nxs;
      std::vector<std::size_t> live;
      Matrix A(1, tc.batch), Y(1, tc.batch);
      std::vector<double> rewards(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        xs.push_back(&batch[i]->obs);
        A(0, static_cast<Eigen::Index>(i)) = batch[i]->a;
        rewards[i] = batch[i]->r;
        Y(0, static_cast<Eigen::Index>(i)) = tc.reward_scale * batch[i]->r;
        if (!batch[i]->terminal) {
          nxs.push_back(&batch[i]->next);
          live.push_back(i);
        }
      }
      if (!nxs.empty()) {
        const Matrix qn = L.target_q(Traits::encode(nxs, norm));
        for (std::size_t k = 0; k < live.size(); ++k)
          Y(0, static_cast<Eigen::Index>(live[k])) += gamma * qn(0, static_cast<Eigen::Index>(k));
      }
      if (hooks.on_targets)
        hooks.on_targets(0, rewards, std::span<const double>(Y.data(), static_cast<std::size_t>(Y.cols())));
      const NetInput x = Traits::encode(xs, norm);
      const double loss = L.update_critic(x, A, Y);
      L.update_actor(x);
      check_finite(loss, L, algo_name(algo) + " episode " + std::to_string(ep + 1), ep + 1);
      nn::blend_params(L.actor_target.params(), L.actor.params(), tc.soft_update);
      nn::blend_params(L.critic_target.params(), L.critic.params(), tc.soft_update);
      loss_sum += loss;
      ++loss_n;
      q_last = Y.mean() / tc.reward_scale;
    }

    if ((ep + 1) % tc.eval_period == 0) {
      CurvePoint cp;
      cp.episode = ep + 1;
      if (loss_n > 0) cp.critic_loss = loss_sum / loss_n;
      cp.q_mean = q_last;
      loss_sum = 0.0;
      loss_n = 0;
      if (!snap_socs.empty()) {
        double total = 0.0;
        Controller ctl = [&](const PolicyInput& pin) {
          return to_power(actor_action(L.actor, Traits::encode({&Traits::from(pin)}, norm)), cfg.dg);
        };
        const InfoMode mode = std::is_same_v<Traits, MdpObs> ? InfoMode::Full : InfoMode::Lagged;
        for (double s0 : snap_socs) total += rollout(ctl, mode, src.test, s0, cfg).ret;
        cp.eval_return = total / static_cast<double>(snap_socs.size());
      }
      res.curve.push_back(cp);
    }
  }
  res.bundle.actors.push_back(L.actor);
  res.bundle.critics.push_back(L.critic);
  return res;
}

// ---------------------------------------------------------------------------
// Backward-induction trainer (FH-DDPG / FH-RDPG). Each step t is a one-period
// problem whose continuation value comes from the frozen step-(t+1) pair.

template <class Traits>
TrainResult train_backward(Algo algo, const MicrogridConfig& cfg, const data::EpisodeSource& src,
                           const TrainConfig& tc, const TrainHooks& hooks) {
  cfg.validate();
  src.validate(cfg.horizon);
  tc.validate();
  using Tr = Transition<Traits>;
  const bool myopic_terminal = algo == Algo::FhDdpg;
  const Seeds sd = derive(tc.seed);
  const Normalizer norm = make_normalizer(cfg, src);
  const int T = cfg.horizon.t_steps;
  const int tau = cfg.horizon.tau;
  const double gamma = cfg.horizon.gamma;
  const int t_last = myopic_terminal ? T - 1 : T;

  Learner L(actor_spec<Traits>(tc), critic_spec<Traits>(tc));
  std::mt19937_64 init_rng(sd.init);
  L.actor.init(init_rng);
  L.critic.init(init_rng);
  const nn::ParamSet actor0 = L.actor.params();
  const nn::ParamSet critic0 = L.critic.params();

  std::mt19937_64 env_rng(sd.env), sample_rng(sd.sample);
  std::uniform_real_distribution<double> soc_dist(cfg.battery.e_min, cfg.battery.e_max);

  TrainResult res;
  res.bundle = make_bundle<Traits>(algo, cfg, norm, tc);
  std::vector<Network> actors, critics;

  for (int t = t_last; t >= 1; --t) {
    // Fresh buffer and noise stream; working nets restart from the stored initial weights.
    ReplayBuffer<Tr> buffer(static_cast<std::size_t>(tc.buffer_capacity));
    OUProcess ou(tc.ou_theta, tc.ou_sigma, sd.noise + static_cast<std::uint64_t>(t));
    nn::copy_params(L.actor.params(), actor0);
    nn::copy_params(L.critic.params(), critic0);
    L.reset_optimizers(tc);
    if (hooks.on_step_start) hooks.on_step_start(t, buffer.size());

    double loss_sum = 0.0, q_sum = 0.0;
    int loss_n = 0;
    for (int ep = 0; ep < tc.episodes_per_step; ++ep) {
      // A two-step episode: act at t, observe the state at t+1.
      const data::DayProfile& day = pick_day(src, env_rng);
      const double soc = soc_dist(env_rng);
      ou.reset();
      Tr tr;
      tr.obs = Traits::make(day, t, soc, tau);
      const NetInput in = Traits::encode({&tr.obs}, norm);
      tr.a = std::clamp(actor_action(L.actor, in) + ou.sample(), -1.0, 1.0);
      const StepOutcome out = evaluate_step(make_state(day, t, soc), to_power(tr.a, cfg.dg), cfg);
      tr.r = out.reward;
      tr.t = t;
      tr.terminal = t == T;
      if (t < T) {
        tr.next = Traits::next(tr.obs, day, t, out.next_soc, tau);
        tr.next_state = make_state(day, t + 1, out.next_soc);
      }
      buffer.push(std::move(tr));

      if (buffer.size() < static_cast<std::size_t>(tc.warmup_transitions)) continue;
      const auto batch = buffer.sample(static_cast<std::size_t>(tc.batch), sample_rng);
      std::vector<const typename Traits::Obs*> xs, nxs;
      Matrix A(1, tc.batch), Y(1, tc.batch);
      std::vector<double> rewards(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        xs.push_back(&batch[i]->obs);
        A(0, c) = batch[i]->a;
        rewards[i] = batch[i]->r;
        Y(0, c) = tc.reward_scale * batch[i]->r;
        if (t == T) continue;
        if (myopic_terminal && t == T - 1) {
          const State& s2 = batch[i]->next_state;
          const double p = baselines::myopic_action(s2, cfg).p_dg;
          Y(0, c) += gamma * tc.reward_scale * evaluate_step(s2, p, cfg).reward;
        } else {
          nxs.push_back(&batch[i]->next);
        }
      }
      if (!nxs.empty()) {
        const Matrix qn = L.target_q(Traits::encode(nxs, norm));
        Y += gamma * qn;
      }
      if (hooks.on_targets)
        hooks.on_targets(t, rewards, std::span<const double>(Y.data(), static_cast<std::size_t>(Y.cols())));
      const NetInput x = Traits::encode(xs, norm);
      const double loss = L.update_critic(x, A, Y);
      L.update_actor(x);
      check_finite(loss, L, algo_name(algo) + " step t=" + std::to_string(t), t);
      loss_sum += loss;
      q_sum += Y.mean();
      ++loss_n;

      if ((ep + 1) % tc.eval_period == 0 || ep + 1 == tc.episodes_per_step) {
        CurvePoint cp;
        cp.step = t;
        cp.episode = ep + 1;
        cp.critic_loss = loss_sum / loss_n;
        cp.q_mean = q_sum / loss_n / tc.reward_scale;
        res.curve.push_back(cp);
        loss_sum = q_sum = 0.0;
        loss_n = 0;
      }
    }
    // Promote the trained pair to targets for step t-1 (hard copy) and keep the actor.
    nn::copy_params(L.actor_target.params(), L.actor.params());
    nn::copy_params(L.critic_target.params(), L.critic.params());
    actors.push_back(L.actor);
    critics.push_back(L.critic);
  }
  std::reverse(actors.begin(), actors.end());
  std::reverse(critics.begin(), critics.end());
  res.bundle.actors = std::move(actors);
  res.bundle.critics = std::move(critics);
  return res;
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t PolicyBundle::actor_index(int t) const {
  if (t < 1 || t > t_steps) throw ContractViolation("step index " + std::to_string(t) + " outside [1, T]");
  if (kind == Kind::Stationary) return 0;
  if (myopic_terminal && t == t_steps) throw ContractViolation("step T is served by the myopic policy");
  return static_cast<std::size_t>(t - 1);
}

namespace {

NetInput encode_input(const PolicyBundle& b, const PolicyInput& in) {
  if (b.recurrent) {
    if (in.history.tau() != b.tau) throw ContractViolation("bundle expects a history input");
    return PomdpObs::encode({&in.history}, b.norm);
  }
  if (!std::isfinite(in.state.p_load) || !std::isfinite(in.state.p_pv))
    throw ContractViolation("bundle expects a full state input");
  return MdpObs::encode({&in.state}, b.norm);
}

}  // namespace

double PolicyBundle::act(const PolicyInput& in) const {
  if (myopic_terminal && in.t == t_steps) return baselines::myopic_action(in.state, mg).p_dg;
  const Network& actor = actors.at(actor_index(in.t));
  return to_power(actor.predict(encode_input(*this, in))(0, 0), mg.dg);
}

double PolicyBundle::q_value(const PolicyInput& in) const {
  if (myopic_terminal && in.t == t_steps) {
    const double p = baselines::myopic_action(in.state, mg).p_dg;
    return evaluate_step(in.state, p, mg).reward;
  }
  const std::size_t i = actor_index(in.t);
  const NetInput x = encode_input(*this, in);
  Matrix a = actors.at(i).predict(x);
  return critics.at(i).predict(with_aux(x, std::move(a)))(0, 0) / reward_scale;
}

EpisodeTrace rollout(const Controller& ctl, InfoMode mode, const data::DayProfile& day, double soc0,
                     const MicrogridConfig& cfg) {
  const int T = cfg.horizon.t_steps;
  if (day.t_steps() < T) throw ContractViolation("day profile shorter than the horizon");
  if (day.warmup < cfg.horizon.tau) throw ContractViolation("day profile lacks history warm-up");
  EpisodeTrace tr;
  tr.initial_soc = soc0;
  double soc = soc0;
  std::vector<double> rewards;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int t = 1; t <= T; ++t) {
    PolicyInput in;
    in.t = t;
    const auto visible = static_cast<std::size_t>(day.warmup + t - (mode == InfoMode::Full ? 0 : 1));
    in.realized = std::span<const LoadPv>(day.pairs.data(), visible);
    if (mode == InfoMode::Full) {
      in.state = make_state(day, t, soc);
    } else {
      in.state = State{nan, nan, soc};
      in.history = make_history(day, t, soc, cfg.horizon.tau);
    }
    const double p = std::clamp(ctl(in), cfg.dg.p_min, cfg.dg.p_max);
    const State s = make_state(day, t, soc);
    const StepOutcome out = evaluate_step(s, p, cfg);
    tr.steps.push_back(StepRecord{t, s.p_pv, s.p_load, soc, p, out.c_dg, out.c_us, out.reward});
    rewards.push_back(out.reward);
    tr.c_dg_total += out.c_dg;
    tr.c_us_total += out.c_us;
    soc = out.next_soc;
  }
  tr.ret = episode_return(rewards, cfg.horizon.gamma, T);
  return tr;
}

EpisodeTrace run_policy(const PolicyBundle& bundle, const data::DayProfile& day, double soc0) {
  if (bundle.actors.empty()) throw ContractViolation("policy bundle has no actors");
  return rollout([&](const PolicyInput& in) { return bundle.act(in); }, bundle.info_mode(), day, soc0, bundle.mg);
}

TrainResult ddpg_train(const MicrogridConfig& cfg, const data::EpisodeSource& src, const TrainConfig& tc,
                       const TrainHooks& hooks) {
  return train_stationary<MdpObs>(Algo::Ddpg, cfg, src, tc, hooks);
}

TrainResult rdpg_train(const MicrogridConfig& cfg, const data::EpisodeSource& src, const TrainConfig& tc,
                       const TrainHooks& hooks) {
  return train_stationary<PomdpObs>(Algo::Rdpg, cfg, src, tc, hooks);
}

TrainResult fh_ddpg_train(const MicrogridConfig& cfg, const data::EpisodeSource& src, const TrainConfig& tc,
                          const TrainHooks& hooks) {
  return train_backward<MdpObs>(Algo::FhDdpg, cfg, src, tc, hooks);
}

TrainResult fh_rdpg_train(const MicrogridConfig& cfg, const data::EpisodeSource& src, const TrainConfig& tc,
                          const TrainHooks& hooks) {
  return train_backward<PomdpObs>(Algo::FhRdpg, cfg, src, tc, hooks);
}

TrainResult train(Algo algo, const MicrogridConfig& cfg, const data::EpisodeSource& src, const TrainConfig& tc,
                  const TrainHooks& hooks) {
  switch (algo) {
    case Algo::Ddpg: return ddpg_train(cfg, src, tc, hooks);
    case Algo::Rdpg: return rdpg_train(cfg, src, tc, hooks);
    case Algo::FhDdpg: return fh_ddpg_train(cfg, src, tc, hooks);
    case Algo::FhRdpg: return fh_rdpg_train(cfg, src, tc, hooks);
  }
  throw ContractViolation("unknown algorithm");
}

}  // namespace mg::drl
