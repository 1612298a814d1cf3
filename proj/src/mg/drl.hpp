#pragma once

// Actor-critic training for the dispatch problem: stationary DDPG/RDPG and
// their finite-horizon backward-induction counterparts, plus the policy
// bundles they produce and a rollout driver shared with the baselines.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "mg/data.hpp"
#include "mg/errors.hpp"
#include "mg/microgrid.hpp"
#include "mg/nn.hpp"

namespace mg::drl {

// ---------------------------------------------------------------------------
// Replay buffer and exploration noise

template <class T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be >= 1");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t pushed() const { return pushed_; }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[head_] = std::move(item);
      head_ = (head_ + 1) % capacity_;
    }
    ++pushed_;
  }

  // Element i in insertion order (0 = oldest retained).
  const T& at(std::size_t i) const { return items_[(head_ + i) % items_.size()]; }

  // n distinct elements chosen uniformly (Floyd's algorithm).
  std::vector<const T*> sample(std::size_t n, std::mt19937_64& rng) const {
    if (n > items_.size())
      throw ContractViolation("replay buffer holds " + std::to_string(items_.size()) + " items, cannot sample " +
                              std::to_string(n));
    std::vector<std::size_t> chosen;
    chosen.reserve(n);
    std::unordered_set<std::size_t> seen;
    const std::size_t N = items_.size();
    for (std::size_t j = N - n; j < N; ++j) {
      std::uniform_int_distribution<std::size_t> d(0, j);
      const std::size_t r = d(rng);
      if (seen.insert(r).second) {
        chosen.push_back(r);
      } else {
        seen.insert(j);
        chosen.push_back(j);
      }
    }
    std::vector<const T*> out;
    out.reserve(n);
    for (std::size_t i : chosen) out.push_back(&items_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<T> items_;
  std::size_t head_ = 0;
  std::uint64_t pushed_ = 0;
};

class OUProcess {
 public:
  OUProcess(double theta, double sigma, std::uint64_t seed) : theta_(theta), sigma_(sigma), rng_(seed) {}

  void reset(double x = 0.0) { x_ = x; }
  double value() const { return x_; }
  double sample(double dt = 1.0) {
    std::normal_distribution<double> n(0.0, 1.0);
    x_ += theta_ * (0.0 - x_) * dt + sigma_ * std::sqrt(dt) * n(rng_);
    return x_;
  }

 private:
  double theta_, sigma_;
  double x_ = 0.0;
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Configuration

enum class Algo { Ddpg, Rdpg, FhDdpg, FhRdpg };

std::string algo_name(Algo a);
bool is_recurrent(Algo a);
bool is_finite_horizon(Algo a);

struct TrainConfig {
  // Feed-forward networks; the critic's action enters hidden layer `critic_action_layer`.
  std::vector<int> actor_hidden{64, 48, 32};
  std::vector<int> critic_hidden{64, 48, 32};
  int critic_action_layer = 1;
  // Recurrent networks: LSTM layers then a dense head.
  std::vector<int> actor_lstm{32};
  std::vector<int> actor_head{32};
  std::vector<int> critic_lstm{32};
  std::vector<int> critic_head{48, 32};

  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  int batch = 64;
  int buffer_capacity = 20000;
  double reward_scale = 2e-3;
  double soft_update = 0.001;  // stationary variants only
  double ou_theta = 0.15;
  double ou_sigma = 0.5;

  int episodes_per_step = 1500;  // FH variants: M
  int episodes = 1500;           // stationary variants: full-horizon episodes
  int warmup_transitions = 640;  // buffer fill before updates begin
  int eval_period = 50;          // stationary variants: episodes between snapshots
  int eval_episodes = 5;         // episodes per snapshot
  std::uint64_t seed = 1;

  void validate() const;
};

TrainConfig full_preset(Algo a);
TrainConfig desk_preset(Algo a);

// ---------------------------------------------------------------------------
// Inputs and normalization

struct Normalizer {
  Range load{0.0, 800.0};
  Range pv{0.0, 300.0};
  Range soc{24.0, 2000.0};

  double load_n(double v) const { return (v - load.lo) / load.width(); }
  double pv_n(double v) const { return (v - pv.lo) / pv.width(); }
  double soc_n(double v) const { return (v - soc.lo) / soc.width(); }
};

Normalizer make_normalizer(const MicrogridConfig& cfg, const data::EpisodeSource& src);

// Policy input at 1-based step t, built only from what the information mode
// allows. In lagged mode `state` carries the soc and NaN exogenous fields.
struct PolicyInput {
  int t = 1;
  State state;
  History history;
  std::span<const LoadPv> realized;  // visible pairs, chronological
};

enum class InfoMode { Full, Lagged };

State make_state(const data::DayProfile& day, int t, double soc);
History make_history(const data::DayProfile& day, int t, double soc, int tau);

double to_power(double a, const DGParams& dg);  // [-1, 1] -> [p_min, p_max], clamped
double to_unit(double p, const DGParams& dg);

// ---------------------------------------------------------------------------
// Policies

struct PolicyBundle {
  enum class Kind { Stationary, TimeIndexed };
  Kind kind = Kind::Stationary;
  Algo algo = Algo::Ddpg;
  bool recurrent = false;
  bool myopic_terminal = false;  // FH-DDPG dispatches the closed-form myopic policy at t = T
  int t_steps = 24;
  int tau = 4;
  std::vector<nn::Network> actors;   // Stationary: 1; FH-DDPG: T-1; FH-RDPG: T
  std::vector<nn::Network> critics;  // parallel to actors
  Normalizer norm;
  MicrogridConfig mg;
  double reward_scale = 2e-3;  // critics predict scaled returns
  std::uint64_t seed = 0;
  std::string config_hash;

  InfoMode info_mode() const { return recurrent ? InfoMode::Lagged : InfoMode::Full; }
  std::size_t actor_index(int t) const;
  double act(const PolicyInput& in) const;
  // Critic estimate of Q(x_t, mu(x_t)), in unscaled reward units.
  double q_value(const PolicyInput& in) const;
};

void save_bundle(const PolicyBundle& b, const std::filesystem::path& dir);
PolicyBundle load_bundle(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Rollout

struct StepRecord {
  int t = 0;
  double p_pv = 0.0;
  double p_load = 0.0;
  double soc = 0.0;  // E_t before the action
  double p_dg = 0.0;
  double c_dg = 0.0;
  double c_us = 0.0;
  double reward = 0.0;
};

struct EpisodeTrace {
  double initial_soc = 0.0;
  std::vector<StepRecord> steps;
  double ret = 0.0;
  double c_dg_total = 0.0;
  double c_us_total = 0.0;
};

using Controller = std::function<double(const PolicyInput&)>;

// Runs one day. The controller sees the full state (pair t) or, in lagged
// mode, only pairs up to t-1 through its history and `realized` span.
EpisodeTrace rollout(const Controller& ctl, InfoMode mode, const data::DayProfile& day, double soc0,
                     const MicrogridConfig& cfg);

EpisodeTrace run_policy(const PolicyBundle& bundle, const data::DayProfile& day, double soc0);

// ---------------------------------------------------------------------------
// Training

struct CurvePoint {
  int step = 0;        // FH: the time step being trained; stationary: 0
  int episode = 0;
  double critic_loss = std::numeric_limits<double>::quiet_NaN();
  double q_mean = std::numeric_limits<double>::quiet_NaN();
  double eval_return = std::numeric_limits<double>::quiet_NaN();  // stationary snapshots
};

struct TrainHooks {
  // Called with the raw rewards and the regression targets of each minibatch.
  std::function<void(int step, std::span<const double> rewards, std::span<const double> targets)> on_targets;
  // Called when an FH variant starts a step with a fresh buffer.
  std::function<void(int step, std::size_t buffer_size)> on_step_start;
};

struct TrainResult {
  PolicyBundle bundle;
  std::vector<CurvePoint> curve;
};

TrainResult ddpg_train(const MicrogridConfig& cfg, const data::EpisodeSource& src, const TrainConfig& tc,
                       const TrainHooks& hooks = {});
TrainResult rdpg_train(const MicrogridConfig& cfg, const data::EpisodeSource& src, const TrainConfig& tc,
                       const TrainHooks& hooks = {});
TrainResult fh_ddpg_train(const MicrogridConfig& cfg, const data::EpisodeSource& src, const TrainConfig& tc,
                          const TrainHooks& hooks = {});
TrainResult fh_rdpg_train(const MicrogridConfig& cfg, const data::EpisodeSource& src, const TrainConfig& tc,
                          const TrainHooks& hooks = {});

TrainResult train(Algo algo, const MicrogridConfig& cfg, const data::EpisodeSource& src, const TrainConfig& tc,
                  const TrainHooks& hooks = {});

}  // namespace mg::drl
