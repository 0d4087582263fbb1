#include "ignd/cartpole.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ignd/csv.hpp"
#include "ignd/errors.hpp"

namespace ignd {

bool cartpole_failed(const CartPoleState& s, const CartPoleParams& p) {
  return std::abs(s[0]) > p.position_limit || std::abs(s[2]) > p.angle_limit;
}

CartPoleStep cartpole_step(const CartPoleState& s, int action, const CartPoleParams& p) {
  if (action != 0 && action != 1) throw IndexOutOfRange("cart-pole action " + std::to_string(action));
  if (cartpole_failed(s, p)) throw SteppedTerminal();
  const double total_mass = p.cart_mass + p.pole_mass;
  const double pole_moment = p.pole_mass * p.half_length;
  const double f = action == 1 ? p.force : -p.force;
  const double cos_t = std::cos(s[2]);
  const double sin_t = std::sin(s[2]);
  const double tmp = (f + pole_moment * s[3] * s[3] * sin_t) / total_mass;
  const double theta_acc = (p.gravity * sin_t - cos_t * tmp) /
                           (p.half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
  const double x_acc = tmp - pole_moment * theta_acc * cos_t / total_mass;

  CartPoleStep out;
  out.next = {s[0] + p.tau * s[1], s[1] + p.tau * x_acc, s[2] + p.tau * s[3], s[3] + p.tau * theta_acc};
  out.failed = cartpole_failed(out.next, p);
  out.reward = 1.0;
  return out;
}

CartPoleState cartpole_reset(Rng& rng) {
  CartPoleState s;
  for (double& v : s) v = rng.uniform(-0.05, 0.05);
  return s;
}

double cartpole_mp_reward(const CartPoleState& s) {
  return std::max(5.0 - 100.0 * s[2] * s[2] - s[3] * s[3], 0.0);
}

double acrobot_mp_reward(double s1, double s2, int action) {
  const double h = 2.0 + std::cos(s1) + std::cos(s1 + s2);
  return -h * h - ((action == 1 || action == 3) ? 1.0 : 0.0);
}

Vector q_input(const CartPoleState& s, int action) {
  Vector x(6);
  x << s[0], s[1], s[2], s[3], action == 0 ? 1.0 : 0.0, action == 1 ? 1.0 : 0.0;
  return x;
}

double exploration_rate(const QNetConfig& net, long t) {
  const double horizon = net.exploration_fraction * static_cast<double>(net.anneal_steps);
  if (horizon <= 0) return net.exploration_end;
  const double frac = std::min(1.0, static_cast<double>(t) / horizon);
  return net.exploration_start + frac * (net.exploration_end - net.exploration_start);
}

std::array<double, 2> q_values(const Mlp& net, const Vector& w, const CartPoleState& s,
                               Mlp::Workspace& ws) {
  return {net.predict(w, q_input(s, 0), ws), net.predict(w, q_input(s, 1), ws)};
}

DeepQResult deep_q_train(const DeepQConfig& config) {
  const QNetConfig& nc = config.net;
  if (nc.target_update_period < 1) throw ConfigError("net.target_update_period", "must be at least 1");
  if (!(nc.gamma >= 0.0 && nc.gamma <= 1.0)) throw ConfigError("net.gamma", "must lie in [0, 1]");
  if (config.episodes < 0) throw ConfigError("episodes", "must be non-negative");

  const Mlp net(6, relu_network(nc.hidden));
  Rng init_rng = Rng(config.seed).split(1);
  Rng policy_rng = Rng(config.seed).split(2);
  Rng env_rng = Rng(config.seed).split(3);

  DeepQResult result;
  Vector& w = result.weights;
  w = net.init(init_rng);
  Vector target_w = w;
  OptimState state;
  Mlp::Workspace ws;
  const CartPoleParams params;
  long t = 0;

  for (long episode = 0; episode < config.episodes; ++episode) {
    CartPoleState s = cartpole_reset(env_rng);
    DeepEpisodeRecord rec;
    rec.episode = episode;
    rec.epsilon_greedy = exploration_rate(nc, t);
    double xi_sum = 0;
    double td_sum = 0;

    for (long k = 0; k < params.step_limit; ++k) {
      const double eps = exploration_rate(nc, t);
      int action = 0;
      if (config.random_policy || policy_rng.uniform() < eps) {
        action = static_cast<int>(policy_rng.uniform_int(2));
      } else {
        const auto q = q_values(net, w, s, ws);
        action = q[1] > q[0] ? 1 : 0;
      }
      const CartPoleStep st = cartpole_step(s, action, params);
      const double reward = nc.reward == CartPoleReward::mp ? cartpole_mp_reward(st.next) : st.reward;
      rec.ret += reward;
      ++rec.steps;

      if (!config.random_policy) {
        double y = reward;
        if (!st.failed) {
          const auto qt = q_values(net, target_w, st.next, ws);
          y += nc.gamma * std::max(qt[0], qt[1]);
        }
        const GradEval ev = net.eval(w, q_input(s, action), y, ws);
        const StepDiagnostics diag = step(config.optim, state, w, ev);
        xi_sum += diag.xi;
        td_sum += std::abs(ev.residual);
        if (config.record_xi) {
          result.xi_trace.push_back(diag.xi);
          result.grad_sq_trace.push_back(ev.grad_sq_norm);
        }
        if (!all_finite(w)) result.diverged = true;
      }
      ++t;
      if (t % nc.target_update_period == 0) target_w = w;
      s = st.next;
      if (st.failed || result.diverged) break;
    }
    if (rec.steps > 0 && !config.random_policy) {
      rec.xi_mean = xi_sum / static_cast<double>(rec.steps);
      rec.td_error_abs_mean = td_sum / static_cast<double>(rec.steps);
    }
    result.episodes.push_back(rec);
    if (result.diverged) break;
  }
  return result;
}

double mean_return(const DeepQResult& result) {
  if (result.episodes.empty()) return 0.0;
  double sum = 0;
  for (const auto& e : result.episodes) sum += e.ret;
  return sum / static_cast<double>(result.episodes.size());
}

std::vector<std::string> deep_learning_curve_header() {
  return {"run_id", "seed",    "episode",        "return",
          "steps",  "xi_mean", "epsilon_greedy", "td_error_abs_mean"};
}

void append_deep_learning_curve(CsvWriter& out, const std::string& run_id, std::uint64_t seed,
                                const std::vector<DeepEpisodeRecord>& episodes) {
  for (const auto& e : episodes) {
    out.field(std::string_view(run_id))
        .field(seed)
        .field(static_cast<std::int64_t>(e.episode))
        .field(e.ret)
        .field(static_cast<std::int64_t>(e.steps))
        .field(e.xi_mean)
        .field(e.epsilon_greedy)
        .field(e.td_error_abs_mean);
    out.end_row();
  }
}

void write_deep_learning_curve(const std::string& path, const std::string& run_id,
                               std::uint64_t seed, const std::vector<DeepEpisodeRecord>& episodes) {
  CsvWriter out(path, deep_learning_curve_header());
  append_deep_learning_curve(out, run_id, seed, episodes);
}

}  // namespace ignd
