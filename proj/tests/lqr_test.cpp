#include "ignd/lqr.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "ignd/csv.hpp"
#include "ignd/errors.hpp"
#include "ignd/numkit.hpp"

namespace ignd {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Matrix random_symmetric(Index d, Rng& rng) {
  Matrix m(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) m(i, j) = rng.normal();
  return (m + m.transpose()) / 2;
}

LQRSystem scalar_system() { return builtin_system("scalar"); }

TEST(QuadraticFeatures, Layout) {
  EXPECT_EQ(quadratic_features(vec({1}), vec({0})), vec({1, 0, 0, 1}));
  EXPECT_EQ(quadratic_features(vec({2}), vec({3})), vec({4, 6, 9, 1}));
  EXPECT_EQ(quadratic_feature_count(6), 22);
}

TEST(QuadraticFeatures, WeightsToMExamples) {
  const QuadraticQ a = weights_to_M(vec({1, 0, 1, 0}), 1, 1);
  EXPECT_EQ(a.M, Matrix::Identity(2, 2));
  EXPECT_EQ(a.c, 0.0);

  const QuadraticQ b = weights_to_M(vec({0, 2, 0, 5}), 1, 1);
  Matrix expect(2, 2);
  expect << 0, 1, 1, 0;
  EXPECT_EQ(b.M, expect);
  EXPECT_EQ(b.c, 5.0);
  const Vector z = vec({1.5, -2});
  EXPECT_DOUBLE_EQ(z.dot(b.M * z), 2 * 1.5 * -2);

  EXPECT_THROW(weights_to_M(vec({1, 2, 3}), 1, 1), LengthMismatch);
}

TEST(QuadraticFeatures, RoundTripAndIdentity) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const Index ns = 1 + static_cast<Index>(rng.uniform_int(4));
    const Index na = 1 + static_cast<Index>(rng.uniform_int(2));
    QuadraticQ q{random_symmetric(ns + na, rng), rng.normal(), ns, na};
    const QuadraticQ back = weights_to_M(M_to_weights(q), ns, na);
    EXPECT_LE((back.M - q.M).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(back.c, q.c);

    const Vector w = M_to_weights(q);
    for (int k = 0; k < 100; ++k) {
      Vector s(ns), a(na);
      for (Index i = 0; i < ns; ++i) s(i) = rng.normal();
      for (Index i = 0; i < na; ++i) a(i) = rng.normal();
      Vector z(ns + na);
      z << s, a;
      const double lhs = w.dot(quadratic_features(s, a));
      ASSERT_NEAR(lhs, z.dot(q.M * z) + q.c, 1e-12 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST(ValueOffset, Examples) {
  const Matrix P = -Matrix::Identity(2, 2);
  EXPECT_EQ(value_offset(Matrix::Zero(2, 2), 0.01 * Matrix::Identity(2, 2), 0.9), 0.0);
  EXPECT_EQ(value_offset(P, Matrix::Zero(2, 2), 0.9), 0.0);
  EXPECT_NEAR(value_offset(P, 0.01 * Matrix::Identity(2, 2), 0.9), -0.18, 1e-15);
}

TEST(PolicyImprovement, ScalarExample) {
  QuadraticQ q{Matrix(2, 2), 0, 1, 1};
  q.M << -2, -0.5, -0.5, -1;
  EXPECT_NEAR(policy_improvement(q)(0, 0), -0.5, 1e-15);
}

TEST(PolicyImprovement, SingularMaaThrows) {
  QuadraticQ q{Matrix(2, 2), 0, 1, 1};
  q.M << -2, -0.5, -0.5, 0;
  EXPECT_THROW(policy_improvement(q), IndefiniteMaa);
  q.M(1, 1) = 1;
  EXPECT_THROW(policy_improvement(q), IndefiniteMaa);
}

TEST(PolicyEvaluation, ZeroStepsReturnsW0) {
  PolicyEvalConfig cfg;
  cfg.max_steps = 0;
  Rng rng(1);
  const Vector w0 = vec({1, 2, 3, 4});
  const PolicyEvalResult r = policy_evaluation(scalar_system(), Matrix::Zero(1, 1), w0, cfg, rng);
  EXPECT_EQ(r.w, w0);
  EXPECT_EQ(r.steps_used, 0);
}

TEST(PolicyEvaluation, DegenerateTrajectoryMovesOnlyConstant) {
  LQRSystem sys = scalar_system();
  sys.Sigma.setZero();
  PolicyEvalConfig cfg;
  cfg.exploration_variance = 0;
  cfg.init_state_scale = 0;
  cfg.max_steps = 50;
  cfg.tol = 0;
  Rng rng(1);
  const Vector w0 = vec({0.3, -0.2, 0.1, 1});
  const PolicyEvalResult r = policy_evaluation(sys, Matrix::Zero(1, 1), w0, cfg, rng);
  EXPECT_EQ(r.w.head(3), w0.head(3));
  EXPECT_NE(r.w(3), w0(3));
}

TEST(PolicyEvaluation, TdFixedPointOnStaticSystem) {
  const LQRSystem sys = make_system(Matrix::Zero(2, 2), Matrix::Identity(2, 2),
                                    -Matrix::Identity(2, 2), -Matrix::Identity(2, 2),
                                    Matrix::Zero(2, 2), 0.9);
  PolicyEvalConfig cfg;
  cfg.alpha = LRSchedule::constant(0.5);
  cfg.epsilon = 0;
  cfg.exploration_variance = 1;
  cfg.max_steps = 20000;
  cfg.tol = 0;
  cfg.restart_every = 20;
  Rng rng(3);
  const PolicyEvalResult r = policy_evaluation(sys, Matrix::Zero(2, 2),
                                               Vector::Zero(quadratic_feature_count(4)), cfg, rng,
                                               0, true);
  ASSERT_GE(r.td_errors.size(), 1000u);
  double worst = 0;
  for (std::size_t i = r.td_errors.size() - 1000; i < r.td_errors.size(); ++i)
    worst = std::max(worst, std::abs(r.td_errors[i]));
  EXPECT_LT(worst, 1e-3);
}

TEST(PolicyEvaluation, ExactEvaluationMatchesClosedForm) {
  const LQRSystem base = builtin_system("2x1");
  const LQRSystem sys =
      make_system(base.A, base.B, base.Q, base.R, Matrix::Zero(2, 2), base.gamma);
  const auto ric = riccati_fixed_point(sys.A, sys.B, sys.Q, sys.R, sys.gamma);
  for (const Matrix& K : {Matrix(ric.K_star), Matrix(0.5 * ric.K_star)}) {
    PolicyEvalConfig cfg;
    cfg.alpha = LRSchedule::constant(0.5);
    cfg.epsilon = 0;
    cfg.exploration_variance = 1;
    cfg.max_steps = 100000;
    cfg.tol = 0;
    cfg.restart_every = 50;
    Rng rng(1);
    const PolicyEvalResult r =
        policy_evaluation(sys, K, Vector::Zero(quadratic_feature_count(3)), cfg, rng);
    const QuadraticQ learned = weights_to_M(r.w, 2, 1);
    const QuadraticQ exact = policy_q_matrix(sys, K);
    EXPECT_LE((learned.M_ss() - exact.M_ss()).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_LE((learned.M_sa() - exact.M_sa()).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_LE((learned.M_aa() - exact.M_aa()).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_NEAR(learned.c, 0.0, 1e-3);
  }
  // Evaluating K* and improving recovers K*.
  PolicyEvalConfig cfg;
  cfg.alpha = LRSchedule::constant(0.5);
  cfg.epsilon = 0;
  cfg.exploration_variance = 1;
  cfg.max_steps = 100000;
  cfg.tol = 0;
  cfg.restart_every = 50;
  Rng rng(2);
  const PolicyEvalResult r = policy_evaluation(sys, Matrix(ric.K_star),
                                               Vector::Zero(quadratic_feature_count(3)), cfg, rng);
  const Matrix K = policy_improvement(weights_to_M(r.w, 2, 1));
  EXPECT_LE((K - ric.K_star).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(PolicyEvaluation, FeatureScaleInvariance) {
  const LQRSystem sys = builtin_system("2x1");
  PolicyEvalConfig cfg = default_gpi_config(Rule::ignd).eval;
  cfg.epsilon = 0;
  cfg.tol = 0;
  cfg.max_steps = 500;
  const Matrix K = Matrix::Constant(1, 2, -0.1);
  const Vector w0 = Vector::Zero(quadratic_feature_count(3));

  Rng rng_a(9);
  const PolicyEvalResult plain = policy_evaluation(sys, K, w0, cfg, rng_a, 0, true);

  // Dense features share one xi, so only a uniform rescale cancels exactly.
  for (double phi : {1e-3, 0.5, 37.0, 1e4}) {
    cfg.feature_scale = Vector::Constant(w0.size(), phi);
    Rng rng_b(9);
    const PolicyEvalResult scaled = policy_evaluation(sys, K, w0, cfg, rng_b, 0, true);
    ASSERT_EQ(plain.predicted.size(), scaled.predicted.size());
    for (std::size_t i = 0; i < plain.predicted.size(); ++i)
      ASSERT_NEAR(plain.predicted[i], scaled.predicted[i],
                  1e-9 * std::max(1.0, std::abs(plain.predicted[i])))
          << "phi " << phi << " step " << i;
  }
}

TEST(PolicyEvaluation, NonUniformScaleChangesDenseFeatureUpdates) {
  const LQRSystem sys = builtin_system("2x1");
  PolicyEvalConfig cfg = default_gpi_config(Rule::ignd).eval;
  cfg.epsilon = 0;
  cfg.tol = 0;
  cfg.max_steps = 50;
  const Matrix K = Matrix::Constant(1, 2, -0.1);
  const Vector w0 = Vector::Zero(quadratic_feature_count(3));
  Rng rng_a(9);
  const PolicyEvalResult plain = policy_evaluation(sys, K, w0, cfg, rng_a, 0, true);
  Vector phi = Vector::Ones(w0.size());
  phi(0) = 100;
  cfg.feature_scale = phi;
  Rng rng_b(9);
  const PolicyEvalResult scaled = policy_evaluation(sys, K, w0, cfg, rng_b, 0, true);
  EXPECT_GT(std::abs(plain.predicted.back() - scaled.predicted.back()), 1e-6);
}

TEST(PolicyEvaluation, RejectsBadInputs) {
  const LQRSystem sys = scalar_system();
  PolicyEvalConfig cfg;
  Rng rng(1);
  EXPECT_THROW(policy_evaluation(sys, Matrix::Zero(1, 2), Vector::Zero(4), cfg, rng),
               DimensionMismatch);
  EXPECT_THROW(policy_evaluation(sys, Matrix::Zero(1, 1), Vector::Zero(3), cfg, rng),
               LengthMismatch);
  cfg.rule = Rule::adam;
  EXPECT_THROW(policy_evaluation(sys, Matrix::Zero(1, 1), Vector::Zero(4), cfg, rng),
               ConfigError);
}

TEST(PolicyIteration, UncontrollableSystemIsDegenerate) {
  const LQRSystem sys = make_system(Matrix::Constant(1, 1, 0.5), Matrix::Zero(1, 1),
                                    -Matrix::Identity(1, 1), -Matrix::Identity(1, 1),
                                    Matrix::Constant(1, 1, 0.01), 0.9);
  EXPECT_TRUE(sys.degenerate());
  GpiConfig cfg = default_gpi_config(Rule::ignd);
  cfg.improvements = 3;
  const GpiResult r = run_policy_iteration(sys, cfg);
  EXPECT_TRUE(r.degenerate);
}

TEST(PolicyIteration, ScalarIgndqReachesRiccatiGain) {
  GpiConfig cfg = default_gpi_config(Rule::ignd);
  cfg.seed = 0;
  const GpiResult r = run_policy_iteration(scalar_system(), cfg);
  ASSERT_EQ(r.status, GpiStatus::ok) << r.message;
  EXPECT_LE((r.K - r.K_star).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(PolicyIteration, Deterministic) {
  GpiConfig cfg = default_gpi_config(Rule::ignd);
  cfg.improvements = 5;
  cfg.seed = 4;
  const GpiResult a = run_policy_iteration(builtin_system("2x1"), cfg);
  const GpiResult b = run_policy_iteration(builtin_system("2x1"), cfg);
  EXPECT_EQ(a.k_error_trace, b.k_error_trace);
  EXPECT_EQ(a.K, b.K);
}

TEST(LQRSystem, ValidateRejects) {
  const Matrix I = Matrix::Identity(1, 1);
  EXPECT_THROW(make_system(I, I, -I, I, Matrix::Zero(1, 1), 0.9), ConfigError);
  EXPECT_THROW(make_system(I, I, -I, -I, Matrix::Zero(1, 1), 1.0), ConfigError);
  EXPECT_THROW(make_system(I, I, -I, -I, -I, 0.9), ConfigError);
  EXPECT_THROW(make_system(I, Matrix::Zero(2, 1), -I, -I, Matrix::Zero(1, 1), 0.9),
               DimensionMismatch);
  Matrix Q(2, 2);
  Q << -1, 0.5, 0, -1;
  EXPECT_THROW(make_system(Matrix::Identity(2, 2), Matrix::Zero(2, 1), Q, -I,
                           Matrix::Zero(2, 2), 0.9),
               ConfigError);
}

TEST(LQRSystem, BuiltinsValidateAndRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "ignd_lqr_test";
  std::filesystem::create_directories(dir);
  for (const std::string& name : builtin_system_names()) {
    const LQRSystem sys = builtin_system(name);
    EXPECT_NO_THROW(sys.validate()) << name;
    const auto path = dir / (name + ".txt");
    save_system(path, sys);
    const LQRSystem back = load_system(path);
    EXPECT_EQ(back.A, sys.A) << name;
    EXPECT_EQ(back.B, sys.B) << name;
    EXPECT_EQ(back.Q, sys.Q) << name;
    EXPECT_EQ(back.R, sys.R) << name;
    EXPECT_EQ(back.Sigma, sys.Sigma) << name;
    EXPECT_EQ(back.gamma, sys.gamma) << name;
  }
  EXPECT_THROW(builtin_system("nope"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(LQRTrace, Header) {
  EXPECT_EQ(lqr_trace_header(), (std::vector<std::string>{"run_id", "seed", "improvement_index",
                                                          "k_error_inf", "eval_steps_used"}));
}

}  // namespace
}  // namespace ignd
