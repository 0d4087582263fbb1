#pragma once

// Cart-pole dynamics, the modified reward functions, and incremental deep
// Q-learning with a target network and no replay buffer.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ignd/csv.hpp"
#include "ignd/model.hpp"
#include "ignd/optim.hpp"
#include "ignd/rng.hpp"
#include "ignd/types.hpp"

namespace ignd {

/// Classic cart-pole constants, Euler integration.
struct CartPoleParams {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
  double force = 10.0;
  double tau = 0.02;
  double angle_limit = 0.2095;  // 12 degrees
  double position_limit = 2.4;
  long step_limit = 500;
};

/// (x, x_dot, theta, theta_dot)
using CartPoleState = std::array<double, 4>;

struct CartPoleStep {
  CartPoleState next;
  double reward = 1;     // original reward
  bool failed = false;   // angle or position out of bounds
};

bool cartpole_failed(const CartPoleState& s, const CartPoleParams& p = {});

/// action 0 pushes left, 1 pushes right. Throws SteppedTerminal from a failed state.
CartPoleStep cartpole_step(const CartPoleState& s, int action, const CartPoleParams& p = {});

/// Uniform in [-0.05, 0.05] per component.
CartPoleState cartpole_reset(Rng& rng);

/// max{5 - 100 theta^2 - theta_dot^2, 0}; range [0, 5].
double cartpole_mp_reward(const CartPoleState& s);

/// -(2 + cos s1 + cos(s1 + s2))^2 - [action in {1, 3}]; range [-17, 0].
double acrobot_mp_reward(double s1, double s2, int action);

enum class CartPoleReward { original, mp };

struct QNetConfig {
  std::vector<Index> hidden = {32, 64, 32};
  double gamma = 0.99;
  long target_update_period = 100;  // p
  double exploration_start = 1.0;
  double exploration_end = 0.05;
  double exploration_fraction = 1.0;
  /// Steps over which exploration anneals is fraction * anneal_steps.
  long anneal_steps = 10000;
  CartPoleReward reward = CartPoleReward::mp;
};

struct DeepQConfig {
  QNetConfig net;
  OptimConfig optim{Rule::ignd, LRSchedule::constant(0.1)};
  long episodes = 300;
  std::uint64_t seed = 0;
  bool random_policy = false;  // act uniformly and skip learning
  bool record_xi = false;      // keep every xi and |grad q|^2
};

struct DeepEpisodeRecord {
  long episode = 0;
  double ret = 0;
  long steps = 0;
  double xi_mean = 0;
  double epsilon_greedy = 0;
  double td_error_abs_mean = 0;
};

struct DeepQResult {
  std::vector<DeepEpisodeRecord> episodes;
  Vector weights;
  std::vector<double> xi_trace;
  std::vector<double> grad_sq_trace;
  bool diverged = false;
};

/// Network input [s; one_hot(a)].
Vector q_input(const CartPoleState& s, int action);

/// Linear annealing from start to end over fraction * anneal_steps, then held.
double exploration_rate(const QNetConfig& net, long t);

/// q(s, a) for both actions.
std::array<double, 2> q_values(const Mlp& net, const Vector& w, const CartPoleState& s,
                               Mlp::Workspace& ws);

DeepQResult deep_q_train(const DeepQConfig& config);

double mean_return(const DeepQResult& result);

/// run_id,seed,episode,return,steps,xi_mean,epsilon_greedy,td_error_abs_mean
std::vector<std::string> deep_learning_curve_header();
void append_deep_learning_curve(CsvWriter& out, const std::string& run_id, std::uint64_t seed,
                                const std::vector<DeepEpisodeRecord>& episodes);
void write_deep_learning_curve(const std::string& path, const std::string& run_id,
                               std::uint64_t seed, const std::vector<DeepEpisodeRecord>& episodes);

}  // namespace ignd
