#pragma once

// Central finite-difference check of Network::backward.

#include <algorithm>
#include <cmath>
#include <random>

#include "mg/nn.hpp"

namespace mgtest {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int probes = 0;
};

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline mg::nn::NetInput random_input(const mg::nn::Network& net, int batch, int seq_len, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto rnd = [&](Eigen::Index r, Eigen::Index c) {
    mg::nn::Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
  };
  mg::nn::NetInput in;
  if (const auto* m = std::get_if<mg::nn::MlpSpec>(&net.spec())) {
    in.x = rnd(m->input, batch);
    if (m->aux_width > 0) in.aux = rnd(m->aux_width, batch);
  } else {
    const auto& r = std::get<mg::nn::RecurrentSpec>(net.spec());
    for (int s = 0; s < seq_len; ++s) in.seq.push_back(rnd(r.seq_width, batch));
    if (r.static_width > 0) in.x = rnd(r.static_width, batch);
    if (r.aux_width > 0) in.aux = rnd(r.aux_width, batch);
  }
  return in;
}

// Loss = sum(w .* net(input)). Probes `n_param` random parameters and
// `n_input` random input entries (static, sequence or aux).
inline GradCheckResult grad_check(mg::nn::Network& net, std::uint64_t seed, int n_param, int n_input,
                                  int seq_len = 4, double eps = 1e-5) {
  std::mt19937_64 rng(seed);
  // Wider-than-default weights so that gradients are well above round-off.
  std::uniform_real_distribution<double> w(-0.6, 0.6);
  for (auto& v : net.params().values) v = w(rng);
  const int batch = 3;
  mg::nn::NetInput in = random_input(net, batch, seq_len, rng);
  mg::nn::Matrix up(net.output_width(), batch);
  for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = w(rng);

  auto loss = [&](const mg::nn::NetInput& x) { return (net.predict(x).array() * up.array()).sum(); };

  net.params().zero_grad();
  net.forward(in);
  mg::nn::InputGrad ig = net.backward(up);

  GradCheckResult res;
  auto& vals = net.params().values;
  std::uniform_int_distribution<std::size_t> pick(0, vals.size() - 1);
  for (int k = 0; k < n_param; ++k) {
    const std::size_t i = pick(rng);
    const double keep = vals[i];
    vals[i] = keep + eps;
    const double lp = loss(in);
    vals[i] = keep - eps;
    const double lm = loss(in);
    vals[i] = keep;
    const double fd = (lp - lm) / (2 * eps);
    res.max_rel_err = std::max(res.max_rel_err, rel_error(net.params().grads[i], fd));
    ++res.probes;
  }
  // Input probes.
  std::vector<std::pair<mg::nn::Matrix*, const mg::nn::Matrix*>> slots;
  if (in.x.size() > 0) slots.push_back({&in.x, &ig.x});
  if (in.aux.size() > 0) slots.push_back({&in.aux, &ig.aux});
  for (std::size_t s = 0; s < in.seq.size(); ++s) slots.push_back({&in.seq[s], &ig.seq[s]});
  std::uniform_int_distribution<std::size_t> pick_slot(0, slots.size() - 1);
  for (int k = 0; k < n_input; ++k) {
    auto [m, g] = slots[pick_slot(rng)];
    std::uniform_int_distribution<Eigen::Index> pe(0, m->size() - 1);
    const Eigen::Index i = pe(rng);
    const double keep = m->data()[i];
    m->data()[i] = keep + eps;
    const double lp = loss(in);
    m->data()[i] = keep - eps;
    const double lm = loss(in);
    m->data()[i] = keep;
    const double fd = (lp - lm) / (2 * eps);
    res.max_rel_err = std::max(res.max_rel_err, rel_error(g->data()[i], fd));
    ++res.probes;
  }
  return res;
}

}  // namespace mgtest
