#include "ignd/frozenlake.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "ignd/csv.hpp"
#include "ignd/errors.hpp"
#include "ignd/model.hpp"

namespace ignd {

namespace {

Index move(const GridWorld& env, Index state, Index action) {
  Index r = state / env.cols;
  Index c = state % env.cols;
  switch (action) {
    case kLeft:
      c = std::max<Index>(c - 1, 0);
      break;
    case kDown:
      r = std::min<Index>(r + 1, env.rows - 1);
      break;
    case kRight:
      c = std::min<Index>(c + 1, env.cols - 1);
      break;
    case kUp:
      r = std::max<Index>(r - 1, 0);
      break;
    default:
      throw IndexOutOfRange("grid action " + std::to_string(action));
  }
  return r * env.cols + c;
}

/// NaN sorts below every number so a diverged entry is never preferred.
double rank_value(double q) { return std::isnan(q) ? -std::numeric_limits<double>::infinity() : q; }

}  // namespace

bool GridWorld::is_hole(Index s) const { return std::find(holes.begin(), holes.end(), s) != holes.end(); }

Transition env_step(const GridWorld& env, Index state, Index action, long steps_taken, Rng& rng) {
  if (state < 0 || state >= env.n_states()) throw IndexOutOfRange("grid state " + std::to_string(state));
  if (action < 0 || action >= GridWorld::n_actions) {
    throw IndexOutOfRange("grid action " + std::to_string(action));
  }
  if (env.is_absorbing(state) || steps_taken >= env.step_limit) throw SteppedTerminal();

  Index direction = action;
  if (env.slippery) {
    // Intended direction or either perpendicular one, each with probability 1/3.
    const auto k = static_cast<Index>(rng.uniform_int(3));
    direction = (action + GridWorld::n_actions - 1 + k) % GridWorld::n_actions;
  }
  Transition t;
  t.state = state;
  t.action = action;
  t.next_state = move(env, state, direction);
  t.reward = t.next_state == env.goal ? 1.0 : 0.0;
  t.terminal = env.is_absorbing(t.next_state) || steps_taken + 1 >= env.step_limit;
  return t;
}

TabularResult tabular_q_learning(const GridWorld& env, const TabularConfig& config) {
  if (!(config.gamma >= 0.0 && config.gamma <= 1.0)) throw ConfigError("gamma", "must lie in [0, 1]");
  if (config.optim.rule != Rule::sgd && config.optim.rule != Rule::ignd) {
    throw ConfigError("optimizer", "tabular learning supports ql (sgd) and igndq (ignd)");
  }
  const Index ns = env.n_states();
  const Index na = GridWorld::n_actions;
  const Index dim = ns * na;
  if (config.phi && config.phi->size() != dim) throw DimensionMismatch("phi length");

  const LinearModel model(dim);
  Rng policy_rng = Rng(config.seed).split(1);
  Rng env_rng = Rng(config.seed).split(2);

  TabularResult result;
  Vector& w = result.weights;
  w = Vector::Zero(dim);
  OptimState state;

  auto q = [&](Index s, Index a) {
    return model.predict(w, tabular_features(s, a, ns, na, config.phi));
  };
  auto greedy = [&](Index s) {
    std::array<double, GridWorld::n_actions> values{};
    double best = -std::numeric_limits<double>::infinity();
    for (Index a = 0; a < na; ++a) {
      values[static_cast<std::size_t>(a)] = rank_value(q(s, a));
      best = std::max(best, values[static_cast<std::size_t>(a)]);
    }
    std::array<Index, GridWorld::n_actions> ties{};
    std::size_t count = 0;
    for (Index a = 0; a < na; ++a) {
      const double v = values[static_cast<std::size_t>(a)];
      const bool tied = std::isinf(best) ? v == best
                                         : best - v <= config.tie_tolerance * std::max(1.0, std::abs(best));
      if (tied) ties[count++] = a;
    }
    // One draw per decision, whatever the tie count, keeps streams aligned.
    const double u = policy_rng.uniform();
    return ties[std::min(count - 1, static_cast<std::size_t>(u * static_cast<double>(count)))];
  };

  const double q_bound = config.gamma < 1.0 ? 1.0 / (1.0 - config.gamma) : std::numeric_limits<double>::infinity();
  Index s = env.start;
  long ep_steps = 0;
  double ep_return = 0;
  double ep_xi = 0;
  long episode = 0;

  for (long t = 0; t < config.steps; ++t) {
    const bool explore = policy_rng.uniform() < config.exploration;
    const auto random_action = static_cast<Index>(policy_rng.uniform_int(static_cast<std::uint64_t>(na)));
    const Index greedy_action = greedy(s);
    const Index a = explore ? random_action : greedy_action;

    const Transition tr = env_step(env, s, a, ep_steps, env_rng);
    double target = tr.reward;
    if (!tr.terminal) {
      double best = -std::numeric_limits<double>::infinity();
      for (Index b = 0; b < na; ++b) best = std::max(best, rank_value(q(tr.next_state, b)));
      target += config.gamma * best;
    }
    const GradEval ev = model.eval(w, tabular_features(s, a, ns, na, config.phi), target);
    result.predicted_q.push_back(ev.value);
    result.states.push_back(s);
    result.actions.push_back(a);
    result.max_abs_q = std::max(result.max_abs_q, std::abs(ev.value));
    if (std::abs(ev.value) > q_bound * (1.0 + 1e-9)) result.bound_violated = true;

    const StepDiagnostics diag = step(config.optim, state, w, ev);
    ep_xi += diag.xi;
    ep_return += tr.reward;
    ++ep_steps;

    if (tr.terminal) {
      result.episodes.push_back({episode++, ep_return, ep_steps, ep_xi / static_cast<double>(ep_steps)});
      s = env.start;
      ep_steps = 0;
      ep_return = 0;
      ep_xi = 0;
    } else {
      s = tr.next_state;
    }
  }
  return result;
}

Vector draw_phi(Index dim, std::int64_t bound, Rng& rng) {
  if (bound < 1) throw ConfigError("phi_bound", "must be at least 1");
  Vector phi(dim);
  for (Index j = 0; j < dim; ++j) {
    std::int64_t v = 0;
    while (v == 0) v = rng.uniform_int(-bound, bound);
    phi[j] = static_cast<double>(v);
  }
  return phi;
}

double final_mean_return(const TabularResult& result, double fraction) {
  const auto& eps = result.episodes;
  if (eps.empty()) return 0.0;
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(eps.size()))));
  double sum = 0;
  for (std::size_t i = eps.size() - n; i < eps.size(); ++i) sum += eps[i].ret;
  return sum / static_cast<double>(n);
}

std::vector<std::string> learning_curve_header() {
  return {"run_id", "seed", "episode", "return", "steps", "xi_mean"};
}

void append_learning_curve(CsvWriter& out, const std::string& run_id, std::uint64_t seed,
                           const std::vector<EpisodeRecord>& episodes) {
  for (const auto& e : episodes) {
    out.field(std::string_view(run_id))
        .field(seed)
        .field(static_cast<std::int64_t>(e.episode))
        .field(e.ret)
        .field(static_cast<std::int64_t>(e.steps))
        .field(e.xi_mean);
    out.end_row();
  }
}

void write_learning_curve(const std::string& path, const std::string& run_id, std::uint64_t seed,
                          const std::vector<EpisodeRecord>& episodes) {
  CsvWriter out(path, learning_curve_header());
  append_learning_curve(out, run_id, seed, episodes);
}

}  // namespace ignd
