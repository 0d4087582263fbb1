#pragma once

// Per-sample update rules. Every rule consumes a GradEval and uses the
// least-squares sign convention: the loss gradient is -residual * grad f, so a
// descent step moves w along +residual * grad f.

#include <optional>
#include <string>
#include <string_view>

#include "ignd/model.hpp"
#include "ignd/types.hpp"

namespace ignd {

enum class Rule { sgd, ignd, cgd, ngd, adam, ignd_adam };

std::string_view to_string(Rule rule);
std::optional<Rule> parse_rule(std::string_view name);

/// Learning-rate schedule.
///   constant:     alpha0
///   inverse_time: alpha0 / (1 + t / decay)
///   geometric:    alpha0 * (alpha_end / alpha0)^(t / (horizon - 1)), held at
///                 alpha_end for t >= horizon - 1
struct LRSchedule {
  enum class Kind { constant, inverse_time, geometric };

  Kind kind = Kind::constant;
  double alpha0 = 0.1;
  double decay = 1.0;
  double alpha_end = 0.1;
  long horizon = 1;

  static LRSchedule constant(double alpha) { return {Kind::constant, alpha, 1.0, alpha, 1}; }
  static LRSchedule inverse_time(double alpha, double decay) {
    return {Kind::inverse_time, alpha, decay, alpha, 1};
  }
  static LRSchedule geometric(double start, double end, long horizon) {
    return {Kind::geometric, start, 1.0, end, horizon};
  }
};

double schedule_alpha(const LRSchedule& s, long t);

struct OptimConfig {
  Rule rule = Rule::ignd;
  LRSchedule alpha = LRSchedule::constant(0.1);
  double epsilon = 1e-8;   // Levenberg-Marquardt term in the IGND scale
  double eta = 1.0;        // CGD clip threshold
  double beta_ngd = 1e-8;  // NGD offset
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct OptimState {
  long step_count = 0;
  Vector adam_m;  // sized on first adam step
  Vector adam_v;
  double max_grad_sq_seen = 0;  // running max of |grad f|^2
};

struct StepDiagnostics {
  double xi = 1;
  double loss_grad_norm = 0;
  double effective_step_norm = 0;
  double alpha = 0;
};

/// xi = 1 / (|grad f|^2 + epsilon).
double ignd_scale(double grad_sq_norm, double epsilon);

/// The scale each rule applies to the raw gradient step (1 for sgd/adam).
double rule_scale(const OptimConfig& config, const GradEval& ev);

/// Applies one update to `w` in place.
StepDiagnostics step(const OptimConfig& config, OptimState& state, Vector& w, const GradEval& ev);

}  // namespace ignd
