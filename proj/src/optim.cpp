#include "ignd/optim.hpp"

#include <algorithm>
#include <cmath>

#include "ignd/errors.hpp"

namespace ignd {

std::string_view to_string(Rule rule) {
  switch (rule) {
    case Rule::sgd:
      return "sgd";
    case Rule::ignd:
      return "ignd";
    case Rule::cgd:
      return "cgd";
    case Rule::ngd:
      return "ngd";
    case Rule::adam:
      return "adam";
    case Rule::ignd_adam:
      return "ignd_adam";
  }
  return "?";
}

std::optional<Rule> parse_rule(std::string_view name) {
  for (Rule r : {Rule::sgd, Rule::ignd, Rule::cgd, Rule::ngd, Rule::adam, Rule::ignd_adam}) {
    if (to_string(r) == name) return r;
  }
  // RL-facing aliases.
  if (name == "ql") return Rule::sgd;
  if (name == "igndq") return Rule::ignd;
  return std::nullopt;
}

double schedule_alpha(const LRSchedule& s, long t) {
  switch (s.kind) {
    case LRSchedule::Kind::constant:
      return s.alpha0;
    case LRSchedule::Kind::inverse_time:
      return s.alpha0 / (1.0 + static_cast<double>(t) / s.decay);
    case LRSchedule::Kind::geometric: {
      if (s.horizon <= 1) return s.alpha_end;
      const double frac =
          std::min(1.0, static_cast<double>(t) / static_cast<double>(s.horizon - 1));
      return s.alpha0 * std::pow(s.alpha_end / s.alpha0, frac);
    }
  }
  return s.alpha0;
}

double ignd_scale(double grad_sq_norm, double epsilon) {
  const double denom = grad_sq_norm + epsilon;
  if (!(denom > 0.0)) throw DegenerateScale("ignd_scale: |grad f|^2 + epsilon is zero");
  return 1.0 / denom;
}

double rule_scale(const OptimConfig& config, const GradEval& ev) {
  const double loss_grad_norm = std::abs(ev.residual) * std::sqrt(ev.grad_sq_norm);
  switch (config.rule) {
    case Rule::sgd:
    case Rule::adam:
      return 1.0;
    case Rule::ignd:
    case Rule::ignd_adam:
      return ignd_scale(ev.grad_sq_norm, config.epsilon);
    case Rule::cgd:
      if (loss_grad_norm == 0.0) return 1.0 / config.eta;
      return std::min(1.0 / config.eta, 1.0 / loss_grad_norm);
    case Rule::ngd: {
      const double denom = loss_grad_norm + config.beta_ngd;
      if (!(denom > 0.0)) throw DegenerateScale("ngd: |grad L| + beta is zero");
      return 1.0 / denom;
    }
  }
  return 1.0;
}

StepDiagnostics step(const OptimConfig& config, OptimState& state, Vector& w, const GradEval& ev) {
  if (ev.gradient.size() != w.size()) throw DimensionMismatch("step: gradient/weight size");

  StepDiagnostics diag;
  diag.alpha = schedule_alpha(config.alpha, state.step_count);
  diag.xi = rule_scale(config, ev);
  diag.loss_grad_norm = std::abs(ev.residual) * std::sqrt(ev.grad_sq_norm);

  if (config.rule == Rule::adam || config.rule == Rule::ignd_adam) {
    if (state.adam_m.size() != w.size()) {
      state.adam_m = Vector::Zero(w.size());
      state.adam_v = Vector::Zero(w.size());
    }
    const double t = static_cast<double>(state.step_count + 1);
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    // Loss gradient, pre-scaled by xi for the ignd_adam composition.
    const double coeff = -diag.xi * ev.residual;
    state.adam_m = b1 * state.adam_m + (1.0 - b1) * coeff * ev.gradient;
    state.adam_v = b2 * state.adam_v + (1.0 - b2) * (coeff * ev.gradient).cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    const Vector delta = -diag.alpha * (state.adam_m / c1).array() /
                         ((state.adam_v / c2).array().sqrt() + config.adam_eps);
    w += delta;
    diag.effective_step_norm = delta.norm();
  } else {
    const double coeff = diag.alpha * diag.xi * ev.residual;
    w += coeff * ev.gradient;
    diag.effective_step_norm = std::abs(coeff) * std::sqrt(ev.grad_sq_norm);
  }

  ++state.step_count;
  state.max_grad_sq_seen = std::max(state.max_grad_sq_seen, ev.grad_sq_norm);
  return diag;
}

}  // namespace ignd
