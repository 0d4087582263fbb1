#pragma once

// 4x4 FrozenLake-style gridworld and tabular Q-learning over one-hot features.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ignd/csv.hpp"
#include "ignd/optim.hpp"
#include "ignd/rng.hpp"
#include "ignd/types.hpp"

namespace ignd {

/// Actions follow the usual FrozenLake numbering.
enum GridAction : Index { kLeft = 0, kDown = 1, kRight = 2, kUp = 3 };

struct GridWorld {
  Index rows = 4;
  Index cols = 4;
  Index start = 0;
  Index goal = 15;
  std::vector<Index> holes = {5, 7, 11, 12};
  long step_limit = 100;
  bool slippery = false;

  static constexpr Index n_actions = 4;
  Index n_states() const { return rows * cols; }
  bool is_hole(Index s) const;
  bool is_absorbing(Index s) const { return s == goal || is_hole(s); }
};

struct Transition {
  Index state = 0;
  Index action = 0;
  double reward = 0;
  Index next_state = 0;
  bool terminal = false;
};

/// `steps_taken` counts moves already made in the episode; the move that
/// reaches step_limit is terminal. Throws SteppedTerminal from a goal or hole
/// cell or once the limit has been reached.
Transition env_step(const GridWorld& env, Index state, Index action, long steps_taken, Rng& rng);

struct TabularConfig {
  /// Rule::sgd is plain Q-learning (xi = 1); Rule::ignd is IGNDQ.
  OptimConfig optim{Rule::ignd, LRSchedule::constant(1.0), 0.0};
  double exploration = 0.1;  // fixed epsilon-greedy probability
  double gamma = 0.99;
  long steps = 5000;
  std::optional<Vector> phi;  // per-feature scaling of the one-hot design
  std::uint64_t seed = 0;
  /// Relative tolerance under which greedy q-values count as tied.
  double tie_tolerance = 1e-9;
};

struct EpisodeRecord {
  long episode = 0;
  double ret = 0;
  long steps = 0;
  double xi_mean = 0;
};

struct TabularResult {
  std::vector<EpisodeRecord> episodes;  // completed episodes only
  std::vector<double> predicted_q;      // q(S_t, A_t) before each update
  std::vector<Index> states;
  std::vector<Index> actions;
  Vector weights;
  double max_abs_q = 0;
  bool bound_violated = false;  // some |q| exceeded R_max / (1 - gamma)
};

/// Runs `steps` environment steps of epsilon-greedy Q-learning on the linear
/// one-hot model. Greedy ties are broken uniformly at random.
TabularResult tabular_q_learning(const GridWorld& env, const TabularConfig& config);

/// Scaling vector of nonzero integers drawn uniformly from [-bound, bound].
Vector draw_phi(Index dim, std::int64_t bound, Rng& rng);

/// Mean return over the last `fraction` of completed episodes (at least one);
/// 0 when no episode completed.
double final_mean_return(const TabularResult& result, double fraction = 0.1);

/// run_id,seed,episode,return,steps,xi_mean
std::vector<std::string> learning_curve_header();
void append_learning_curve(CsvWriter& out, const std::string& run_id, std::uint64_t seed,
                           const std::vector<EpisodeRecord>& episodes);
void write_learning_curve(const std::string& path, const std::string& run_id, std::uint64_t seed,
                          const std::vector<EpisodeRecord>& episodes);

}  // namespace ignd
