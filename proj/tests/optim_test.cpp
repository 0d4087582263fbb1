#include "ignd/optim.hpp"

#include <gtest/gtest.h>

#include <numbers>

#include "ignd/errors.hpp"
#include "ignd/numkit.hpp"

namespace ignd {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

OptimConfig make(Rule rule, double alpha, double epsilon = 0.0) {
  OptimConfig c;
  c.rule = rule;
  c.alpha = LRSchedule::constant(alpha);
  c.epsilon = epsilon;
  return c;
}

TEST(IgndScale, Values) {
  EXPECT_EQ(ignd_scale(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(ignd_scale(49, 0), 1.0 / 49);
  EXPECT_DOUBLE_EQ(ignd_scale(25, 0), 0.04);
  EXPECT_THROW(ignd_scale(0, 0), DegenerateScale);
  EXPECT_GT(ignd_scale(0, 1e-8), 0.0);
}

TEST(Step, IgndInterpolatesLinearModel) {
  const LinearModel m(2);
  Vector w = Vector::Zero(2);
  const Vector x = vec({1, 2});
  OptimState state;
  const StepDiagnostics d = step(make(Rule::ignd, 1.0), state, w, m.eval(w, x, 1.0));
  EXPECT_DOUBLE_EQ(d.xi, 0.2);
  EXPECT_NEAR(w[0], 0.2, 1e-15);
  EXPECT_NEAR(w[1], 0.4, 1e-15);
  EXPECT_NEAR(m.predict(w, x), 1.0, 1e-15);
}

TEST(Step, SgdOvershoots) {
  const LinearModel m(2);
  Vector w = Vector::Zero(2);
  const Vector x = vec({1, 2});
  OptimState state;
  step(make(Rule::sgd, 1.0), state, w, m.eval(w, x, 1.0));
  EXPECT_EQ(w, vec({1, 2}));
  EXPECT_EQ(m.predict(w, x), 5.0);
}

TEST(RuleScale, ClippedAndNormalized) {
  GradEval ev;
  ev.gradient = vec({3, 4});
  ev.grad_sq_norm = 25;
  ev.residual = 1;  // |grad L| = 5
  OptimConfig cgd = make(Rule::cgd, 1.0);
  cgd.eta = 0.1;
  EXPECT_DOUBLE_EQ(rule_scale(cgd, ev), 0.2);
  OptimConfig ngd = make(Rule::ngd, 1.0);
  ngd.beta_ngd = 1.0;
  EXPECT_DOUBLE_EQ(rule_scale(ngd, ev), 1.0 / 6);
}

TEST(Step, MatchesOracleOnRandomProblems) {
  Rng rng(31);
  const LinearModel m(10);
  for (int k = 0; k < 100; ++k) {
    Vector w(10), x(10);
    for (Index i = 0; i < 10; ++i) {
      w[i] = rng.normal();
      x[i] = rng.normal();
    }
    const GradEval ev = m.eval(w, x, rng.normal());
    const double alpha = rng.uniform(0.1, 1.0);
    Vector w1 = w;
    OptimState state;
    step(make(Rule::ignd, alpha), state, w1, ev);
    const Vector oracle = solve_regularized_gn_oracle(ev.residual, Vector(-ev.gradient));
    EXPECT_LE((w1 - w - alpha * oracle).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Step, EpsilonShrinksStepMonotonically) {
  GradEval ev;
  ev.gradient = vec({0.5, -1.0, 2.0});
  ev.grad_sq_norm = ev.gradient.squaredNorm();
  ev.residual = 0.7;
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.0, 1e-3, 1.0, 1e3, 1e6, 1e12}) {
    Vector w = Vector::Zero(3);
    OptimState state;
    const StepDiagnostics d = step(make(Rule::ignd, 1.0, eps), state, w, ev);
    EXPECT_LT(d.effective_step_norm, prev);
    prev = d.effective_step_norm;
  }
  EXPECT_LT(prev, 1e-11);
}

TEST(Step, AdamAndIgndAdamAgreeWhenXiIsOne) {
  Rng rng(8);
  const LinearModel m(16);
  Vector wa = Vector::Zero(16), wb = Vector::Zero(16);
  OptimState sa, sb;
  for (int t = 0; t < 200; ++t) {
    Vector x = Vector::Zero(16);
    x[static_cast<Index>(rng.uniform_int(16))] = 1.0;
    const double y = rng.normal();
    step(make(Rule::adam, 0.01), sa, wa, m.eval(wa, x, y));
    step(make(Rule::ignd_adam, 0.01), sb, wb, m.eval(wb, x, y));
  }
  EXPECT_EQ(wa, wb);
}

TEST(Step, DimensionMismatch) {
  GradEval ev;
  ev.gradient = Vector::Ones(3);
  ev.grad_sq_norm = 3;
  Vector w = Vector::Zero(2);
  OptimState state;
  EXPECT_THROW(step(make(Rule::sgd, 0.1), state, w, ev), DimensionMismatch);
}

TEST(Step, MaxGradSeenIsMonotone) {
  Rng rng(3);
  const LinearModel m(4);
  Vector w = Vector::Zero(4);
  OptimState state;
  double prev = 0;
  for (int t = 0; t < 50; ++t) {
    Vector x(4);
    for (Index i = 0; i < 4; ++i) x[i] = rng.normal();
    step(make(Rule::ignd, 0.5, 1e-8), state, w, m.eval(w, x, 1.0));
    EXPECT_GE(state.max_grad_sq_seen, prev);
    prev = state.max_grad_sq_seen;
  }
  EXPECT_EQ(state.step_count, 50);
}

TEST(Schedule, Values) {
  EXPECT_EQ(schedule_alpha(LRSchedule::constant(0.1), 999), 0.1);
  EXPECT_EQ(schedule_alpha(LRSchedule::inverse_time(1, 1), 3), 0.25);
  const LRSchedule g = LRSchedule::geometric(1.0, 1e-3, 1001);
  EXPECT_EQ(schedule_alpha(g, 0), 1.0);
  EXPECT_NEAR(schedule_alpha(g, 500), std::sqrt(1e-3), 1e-15);
  EXPECT_NEAR(schedule_alpha(g, 1000), 1e-3, 1e-18);
  EXPECT_NEAR(schedule_alpha(g, 5000), 1e-3, 1e-18);
}

TEST(Schedule, RobbinsMonroPartialSums) {
  const LRSchedule s = LRSchedule::inverse_time(1, 1);
  long double sum = 0, sum_sq = 0;
  for (long t = 999999; t >= 0; --t) {
    const long double a = schedule_alpha(s, t);
    sum += a;
    sum_sq += a * a;
  }
  EXPECT_GE(sum, 13.0L);
  EXPECT_LE(static_cast<double>(sum_sq), std::numbers::pi * std::numbers::pi / 6);
  EXPECT_LE(std::numbers::pi * std::numbers::pi / 6 - static_cast<double>(sum_sq), 1e-6);
}

TEST(ParseRule, NamesAndAliases) {
  EXPECT_EQ(parse_rule("ignd_adam"), Rule::ignd_adam);
  EXPECT_EQ(parse_rule("ql"), Rule::sgd);
  EXPECT_EQ(parse_rule("igndq"), Rule::ignd);
  EXPECT_FALSE(parse_rule("lbfgs").has_value());
  for (Rule r : {Rule::sgd, Rule::ignd, Rule::cgd, Rule::ngd, Rule::adam, Rule::ignd_adam}) {
    EXPECT_EQ(parse_rule(to_string(r)), r);
  }
}

}  // namespace
}  // namespace ignd
