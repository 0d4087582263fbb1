#include "ignd/cartpole.hpp"

#include <gtest/gtest.h>

#include <numbers>

#include "ignd/errors.hpp"

namespace ignd {
namespace {

TEST(CartPole, AlternatingForcesStayUpright) {
  CartPoleState s{0, 0, 0, 0};
  for (int k = 0; k < 20; ++k) {
    const CartPoleStep st = cartpole_step(s, k % 2);
    EXPECT_EQ(st.reward, 1.0);
    ASSERT_FALSE(st.failed) << "step " << k;
    s = st.next;
  }
}

TEST(CartPole, AngleBeyondThresholdFails) {
  const CartPoleStep st = cartpole_step({0, 0, 0.2094, 5.0}, 1);
  EXPECT_TRUE(st.failed);
  EXPECT_THROW(cartpole_step(st.next, 0), SteppedTerminal);
  EXPECT_THROW(cartpole_step({0, 0, 0, 0}, 2), IndexOutOfRange);
}

TEST(CartPole, ResetRange) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    for (double v : cartpole_reset(rng)) EXPECT_LE(std::abs(v), 0.05);
  }
}

TEST(MpReward, CartPoleValues) {
  EXPECT_EQ(cartpole_mp_reward({0, 0, 0, 0}), 5.0);
  EXPECT_NEAR(cartpole_mp_reward({0, 0, 0.2, 1}), 0.0, 1e-12);
  EXPECT_EQ(cartpole_mp_reward({0, 0, 0.5, 0}), 0.0);
}

TEST(MpReward, AcrobotValues) {
  EXPECT_NEAR(acrobot_mp_reward(std::numbers::pi, 0, 0), 0.0, 1e-12);
  EXPECT_EQ(acrobot_mp_reward(0, 0, 0), -16.0);
  EXPECT_EQ(acrobot_mp_reward(0, 0, 3), -17.0);
}

TEST(MpReward, RangesOnRandomStates) {
  Rng rng(2);
  for (int i = 0; i < 100000; ++i) {
    const double c = cartpole_mp_reward({0, 0, rng.uniform(-3.2, 3.2), rng.uniform(-10, 10)});
    ASSERT_GE(c, 0.0);
    ASSERT_LE(c, 5.0);
    const double a = acrobot_mp_reward(rng.uniform(-3.2, 3.2), rng.uniform(-3.2, 3.2),
                                       static_cast<int>(rng.uniform_int(4)));
    ASSERT_GE(a, -17.0);
    ASSERT_LE(a, 0.0);
  }
}

TEST(QNet, InputEncodingAndMaxMatchesEnumeration) {
  const Vector x = q_input({1, 2, 3, 4}, 1);
  ASSERT_EQ(x.size(), 6);
  EXPECT_EQ(x[4], 0.0);
  EXPECT_EQ(x[5], 1.0);
  const Mlp net(6, relu_network({5}));
  Rng rng(3);
  const Vector w = net.init(rng);
  Mlp::Workspace ws;
  const auto q = q_values(net, w, {0.1, -0.2, 0.05, 0.3}, ws);
  EXPECT_EQ(q[0], net.predict(w, q_input({0.1, -0.2, 0.05, 0.3}, 0)));
  EXPECT_EQ(q[1], net.predict(w, q_input({0.1, -0.2, 0.05, 0.3}, 1)));
}

TEST(QNet, ExplorationAnneals) {
  QNetConfig c;
  EXPECT_EQ(exploration_rate(c, 0), 1.0);
  EXPECT_NEAR(exploration_rate(c, 5000), 0.525, 1e-12);
  EXPECT_NEAR(exploration_rate(c, 10000), 0.05, 1e-15);
  EXPECT_NEAR(exploration_rate(c, 50000), 0.05, 1e-15);
}

TEST(DeepQ, XiMonitor) {
  DeepQConfig c;
  c.episodes = 10;
  c.seed = 1;
  c.record_xi = true;
  c.optim.epsilon = 1e-8;
  const DeepQResult r = deep_q_train(c);
  ASSERT_FALSE(r.xi_trace.empty());
  for (std::size_t i = 0; i < r.xi_trace.size(); ++i) {
    EXPECT_GT(r.xi_trace[i], 0.0);
    EXPECT_LE(r.xi_trace[i], 1e8);
    const double g = r.grad_sq_trace[i];
    EXPECT_NEAR(1.0 / r.xi_trace[i] - 1e-8, g, 1e-9 * g);
  }
}

TEST(DeepQ, Deterministic) {
  DeepQConfig c;
  c.episodes = 8;
  c.seed = 5;
  const DeepQResult a = deep_q_train(c);
  const DeepQResult b = deep_q_train(c);
  ASSERT_EQ(a.episodes.size(), b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) EXPECT_EQ(a.episodes[i].ret, b.episodes[i].ret);
  EXPECT_EQ(a.weights, b.weights);
}

TEST(DeepQ, RandomPolicyLeavesWeights) {
  DeepQConfig c;
  c.episodes = 5;
  c.random_policy = true;
  const DeepQResult r = deep_q_train(c);
  const Mlp net(6, relu_network(c.net.hidden));
  Rng init = Rng(c.seed).split(1);
  EXPECT_EQ(r.weights, net.init(init));
}

// With gamma = 0 the TD target is the reward, so one IGND step at alpha = 1,
// epsilon = 0 zeroes the linearized TD error.
TEST(DeepQ, LinearizedTdResidualVanishes) {
  const Mlp net(6, relu_network({8}));
  Rng rng(6);
  Vector w = net.init(rng);
  const CartPoleState s{0.01, 0.02, -0.03, 0.04};
  const CartPoleStep st = cartpole_step(s, 1);
  const double y = cartpole_mp_reward(st.next);
  const GradEval ev = net.eval(w, q_input(s, 1), y);
  OptimConfig c;
  c.rule = Rule::ignd;
  c.alpha = LRSchedule::constant(1.0);
  c.epsilon = 0.0;
  OptimState state;
  const Vector before = w;
  step(c, state, w, ev);
  EXPECT_NEAR(ev.residual - ev.gradient.dot(w - before), 0.0, 1e-9);
}

TEST(DeepQ, ConfigErrors) {
  DeepQConfig c;
  c.net.target_update_period = 0;
  EXPECT_THROW(deep_q_train(c), ConfigError);
}

}  // namespace
}  // namespace ignd
