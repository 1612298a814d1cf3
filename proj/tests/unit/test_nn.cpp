#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "../common/gradcheck.hpp"
#include "mg/errors.hpp"
#include "mg/nn.hpp"

namespace {

using mg::nn::Matrix;
using mg::nn::MlpSpec;
using mg::nn::Network;
using mg::nn::RecurrentSpec;

MlpSpec critic_spec() {
  MlpSpec s;
  s.input = 3;
  s.hidden = {8, 6, 5};
  s.output = 1;
  s.output_act = mg::nn::Activation::Identity;
  s.aux_width = 1;
  s.aux_layer = 1;
  return s;
}

RecurrentSpec recurrent_critic_spec() {
  RecurrentSpec r;
  r.seq_width = 2;
  r.lstm = {5, 4};
  r.static_width = 1;
  r.head = {6};
  r.output = 1;
  r.output_act = mg::nn::Activation::Identity;
  r.aux_width = 1;
  return r;
}

TEST(Init, FinalLayerWithinInitBound) {
  Network net(MlpSpec{4, {16, 8}, 1, mg::nn::Activation::Tanh, 0, 1});
  std::mt19937_64 rng(1);
  net.init(rng);
  for (const auto& name : {"dense2.W", "dense2.b"}) {
    const auto& b = net.params().block(name);
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double v = net.params().values[b.offset + i];
      ASSERT_GE(v, -3e-3);
      ASSERT_LE(v, 3e-3);
    }
  }
}

TEST(Init, SameSeedSameParams) {
  Network a(critic_spec()), b(critic_spec());
  std::mt19937_64 r1(5), r2(5);
  a.init(r1);
  b.init(r2);
  EXPECT_EQ(a.params().values, b.params().values);
}

TEST(Init, ZeroHiddenIsAffine) {
  Network net(MlpSpec{2, {}, 1, mg::nn::Activation::Identity, 0, 1});
  std::mt19937_64 rng(1);
  net.init(rng);
  ASSERT_EQ(net.params().size(), 3u);
  net.params().values = {2.0, -1.0, 0.5};
  mg::nn::NetInput in;
  in.x = Matrix(2, 1);
  in.x << 3.0, 4.0;
  EXPECT_DOUBLE_EQ(net.predict(in)(0, 0), 2.5);
}

TEST(Forward, ZeroParamsGiveZeroOutput) {
  Network net(MlpSpec{3, {4}, 2, mg::nn::Activation::Tanh, 0, 1});
  mg::nn::NetInput in;
  in.x = Matrix::Zero(3, 2);
  EXPECT_TRUE(net.predict(in).isZero());
}

TEST(Forward, WidthMismatchThrows) {
  Network net(critic_spec());
  mg::nn::NetInput in;
  in.x = Matrix::Zero(2, 1);
  in.aux = Matrix::Zero(1, 1);
  EXPECT_THROW(net.predict(in), mg::ContractViolation);
}

TEST(Forward, RecurrentSequenceEqualsStepwise) {
  Network net(recurrent_critic_spec());
  std::mt19937_64 rng(2);
  net.init(rng);
  auto in = mgtest::random_input(net, 3, 4, rng);
  Matrix full = net.predict(in);
  auto carry = net.initial_carry(3);
  for (const auto& x : in.seq) net.step(carry, x);
  Matrix stepwise = net.readout(carry, in.x, in.aux);
  EXPECT_EQ(full, stepwise);
}

TEST(Forward, ActionInjectionLayerMatters) {
  // Same parameter values, action entering at layer 1 vs. layer 0, differ.
  MlpSpec late = critic_spec();
  MlpSpec early = critic_spec();
  early.input = 4;
  early.aux_width = 0;
  Network a(late);
  std::mt19937_64 rng(3);
  a.init(rng);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& v : a.params().values) v = u(rng);
  mg::nn::NetInput in;
  in.x = Matrix::Random(3, 1);
  in.aux = Matrix::Constant(1, 1, 0.7);
  const double q_late = a.predict(in)(0, 0);
  // Move the action into the first-layer input: build a net with the action
  // appended to the state and copy the overlapping weights.
  Network b(early);
  b.init(rng);
  mg::nn::NetInput in2;
  in2.x = Matrix(4, 1);
  in2.x << in.x, 0.7;
  const double q_early = b.predict(in2)(0, 0);
  EXPECT_NE(q_late, q_early);
  // Varying the action changes the late-injection output.
  in.aux(0, 0) = -0.7;
  EXPECT_NE(a.predict(in)(0, 0), q_late);
}

TEST(Backward, WithoutForwardIsCallOrderViolation) {
  Network net(critic_spec());
  EXPECT_THROW(net.backward(Matrix::Ones(1, 1)), mg::ContractViolation);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Network net(recurrent_critic_spec());
  std::mt19937_64 rng(4);
  net.init(rng);
  auto in = mgtest::random_input(net, 2, 4, rng);
  net.params().zero_grad();
  net.forward(in);
  auto g = net.backward(Matrix::Zero(1, 2));
  for (double v : net.params().grads) ASSERT_EQ(v, 0.0);
  EXPECT_TRUE(g.aux.isZero());
}

TEST(Backward, MlpMatchesFiniteDifferences) {
  Network net(critic_spec());
  auto r = mgtest::grad_check(net, 7, 100, 30);
  EXPECT_LE(r.max_rel_err, 1e-4);
  Network actor(MlpSpec{3, {7, 5}, 1, mg::nn::Activation::Tanh, 0, 1});
  r = mgtest::grad_check(actor, 8, 100, 30);
  EXPECT_LE(r.max_rel_err, 1e-4);
}

TEST(Backward, RecurrentMatchesFiniteDifferences) {
  Network net(recurrent_critic_spec());
  auto r = mgtest::grad_check(net, 9, 100, 30, 4);
  EXPECT_LE(r.max_rel_err, 1e-4);
  RecurrentSpec actor{2, {6}, 1, {4}, 1, mg::nn::Activation::Tanh, 0};
  Network a(actor);
  r = mgtest::grad_check(a, 10, 100, 30, 4);
  EXPECT_LE(r.max_rel_err, 1e-4);
}

TEST(Optimizer, ZeroGradientLeavesParams) {
  Network net(critic_spec());
  std::mt19937_64 rng(1);
  net.init(rng);
  auto before = net.params().values;
  net.params().zero_grad();
  mg::nn::Optimizer opt({1e-3}, net.params().size());
  opt.step(net.params());
  EXPECT_EQ(net.params().values, before);
}

TEST(Optimizer, FirstStepMagnitudeIsStepSize) {
  mg::nn::ParamSet p;
  p.values = {1.0};
  p.grads = {0.37};
  p.layout = {{"x", 1, 1, 0}};
  mg::nn::Optimizer opt({0.01}, 1);
  opt.step(p);
  // m_hat = g, v_hat = g^2 -> update = a * g / (|g| + eps).
  EXPECT_NEAR(1.0 - p.values[0], 0.01 * 0.37 / (0.37 + 1e-8), 1e-15);
}

TEST(Optimizer, RejectsBadConfig) {
  EXPECT_THROW(mg::nn::Optimizer({0.0}, 1), mg::ConfigError);
  EXPECT_THROW(mg::nn::Optimizer({1e-3, 1.0}, 1), mg::ConfigError);
}

TEST(Blend, CopyAndSoftUpdate) {
  mg::nn::ParamSet dst, src;
  dst.values = {0.0};
  src.values = {1.0};
  dst.layout = src.layout = {{"x", 1, 1, 0}};
  mg::nn::blend_params(dst, src, 0.001);
  EXPECT_DOUBLE_EQ(dst.values[0], 0.001);
  mg::nn::blend_params(dst, src, 0.0);
  EXPECT_DOUBLE_EQ(dst.values[0], 0.001);
  mg::nn::blend_params(dst, src, 1.0);
  EXPECT_EQ(dst.values, src.values);
  mg::nn::ParamSet other;
  other.values = {1.0, 2.0};
  other.layout = {{"x", 2, 1, 0}};
  EXPECT_THROW(mg::nn::blend_params(dst, other, 0.5), mg::ContractViolation);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Network net(recurrent_critic_spec());
  std::mt19937_64 rng(6);
  net.init(rng);
  auto path = std::filesystem::temp_directory_path() / "mg_nn_ckpt.bin";
  mg::nn::save_params(net.params(), path);
  auto back = mg::nn::load_params(path);
  EXPECT_EQ(back.values, net.params().values);
  EXPECT_TRUE(back.same_layout(net.params()));
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "garbage";
  }
  EXPECT_THROW(mg::nn::load_params(path), mg::IoError);
}

TEST(Determinism, IdenticalTrainingTrajectories) {
  auto run = [] {
    Network net(critic_spec());
    std::mt19937_64 rng(21);
    net.init(rng);
    mg::nn::Optimizer opt({1e-2}, net.params().size());
    for (int i = 0; i < 20; ++i) {
      auto in = mgtest::random_input(net, 4, 1, rng);
      net.params().zero_grad();
      Matrix y = net.forward(in);
      net.backward(y);
      opt.step(net.params());
    }
    return net.params().values;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
