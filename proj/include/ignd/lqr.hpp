#pragma once

// Data-driven discounted LQR: quadratic Q-function features, TD policy
// evaluation (QL or IGNDQ) and generalized policy iteration.
//
// Rewards are r = s^T Q s + a^T R a with Q <= 0 and R < 0, so every value
// function here is non-positive and the Q-matrix action block is negative
// definite at a well-posed policy.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ignd/csv.hpp"
#include "ignd/optim.hpp"
#include "ignd/rng.hpp"
#include "ignd/types.hpp"

namespace ignd {

struct LQRSystem {
  Matrix A;
  Matrix B;
  Matrix Q;
  Matrix R;
  Matrix Sigma;
  double gamma = 0.9;

  Index n_s() const { return A.rows(); }
  Index n_a() const { return B.cols(); }

  /// Dimensions, symmetry of Q/R/Sigma to 1e-12, Q semi-definite, R definite
  /// (either sign, consistently with Q), Sigma PSD, gamma in (0, 1).
  void validate() const;
  /// True when R is negative definite.
  bool negative_rewards() const;
  /// B == 0: the action cannot influence the state.
  bool degenerate() const;
};

LQRSystem make_system(Matrix A, Matrix B, Matrix Q, Matrix R, Matrix Sigma, double gamma);

/// Shipped benchmarks: "scalar" (a=0.9, b=1), "2x1" and "4x2". All use
/// Q = -I, R = -I, Sigma = 0.01 I, gamma = 0.9.
LQRSystem builtin_system(const std::string& name);
std::vector<std::string> builtin_system_names();

/// Plain-text system file: blocks "<name> <rows> <cols>" followed by the
/// whitespace-separated row-major entries, for name in {A, B, Q, R, Sigma},
/// and a line "gamma <value>". '#' starts a comment.
LQRSystem load_system(const std::filesystem::path& path);
void save_system(const std::filesystem::path& path, const LQRSystem& sys);

/// Q(s, a) = z^T M z + c with z = (s; a).
struct QuadraticQ {
  Matrix M;
  double c = 0;
  Index n_s = 0;
  Index n_a = 0;

  auto M_ss() const { return M.topLeftCorner(n_s, n_s); }
  auto M_sa() const { return M.topRightCorner(n_s, n_a); }
  auto M_as() const { return M.bottomLeftCorner(n_a, n_s); }
  auto M_aa() const { return M.bottomRightCorner(n_a, n_a); }
};

inline Index quadratic_feature_count(Index d) { return d * (d + 1) / 2 + 1; }

/// [z_i z_j for i <= j in row-major upper-triangular order, 1].
Vector quadratic_features(const Vector& s, const Vector& a);
/// Same layout from z directly into a preallocated `out`.
void quadratic_features_into(const Vector& z, Vector& out);

QuadraticQ weights_to_M(const Vector& w, Index n_s, Index n_a);
Vector M_to_weights(const QuadraticQ& q);

/// gamma / (1 - gamma) * tr(P Sigma).
double value_offset(const Matrix& P, const Matrix& Sigma, double gamma);

/// Q-matrix of the policy a = K s under the system model, from the value
/// recursion P_K = Q + K^T R K + gamma (A + B K)^T P_K (A + B K).
QuadraticQ policy_q_matrix(const LQRSystem& sys, const Matrix& K, double tol = 1e-13,
                           long max_iter = 1000000);

struct PolicyEvalConfig {
  Rule rule = Rule::ignd;  // Rule::sgd is QL
  LRSchedule alpha = LRSchedule::geometric(1.0, 1e-3, 50000);
  double epsilon = 1e-8;
  double exploration_variance = 0.01;
  double tol = 1e-8;  // stop once |w_i - w_{i-1}|_inf < tol
  long max_steps = 1000;
  double init_state_scale = 1.0;  // S_1 ~ N(0, scale^2 I); 0 starts at the origin
  long restart_every = 0;         // redraw the state every this many steps; 0 never
  std::optional<Vector> feature_scale;  // diagonal rescaling of the feature vector
};

struct PolicyEvalResult {
  Vector w;
  long steps_used = 0;
  bool converged = false;
  std::vector<double> predicted;  // w^T x before each update, when recorded
  std::vector<double> td_errors;
};

/// Semi-gradient TD evaluation of a = K s + noise. `schedule_offset` is
/// the learning-rate schedule index of the first step. Throws Diverged when
/// |w|_inf exceeds 1e12 or turns non-finite.
PolicyEvalResult policy_evaluation(const LQRSystem& sys, const Matrix& K, Vector w0,
                                   const PolicyEvalConfig& config, Rng& rng,
                                   long schedule_offset = 0, bool record = false);

/// K = -M_aa^{-1} M_as. M_aa must be definite with the sign of R; throws
/// IndefiniteMaa otherwise.
Matrix policy_improvement(const QuadraticQ& q, bool negative_rewards = true);

enum class ScheduleScope { global, per_evaluation };

struct GpiConfig {
  PolicyEvalConfig eval;
  long improvements = 50;
  double k_tol = 1e-8;
  double k0_entry = -0.01;
  std::optional<Matrix> K0;
  bool warm_start = true;
  /// global: one schedule across all improvements * max_steps evaluation steps.
  ScheduleScope scope = ScheduleScope::global;
  std::uint64_t seed = 0;
};

/// The Table-style defaults for a rule: IGNDQ alpha 1.0 -> 0.001, QL alpha
/// 6e-7 -> 1e-8, 1000 evaluation steps, 50 improvements.
GpiConfig default_gpi_config(Rule rule);

enum class GpiStatus { ok, diverged, indefinite };

struct GpiResult {
  Matrix K;
  Matrix K_star;
  Matrix P_star;
  std::vector<double> k_error_trace;  // |K_p - K*|_inf; +inf after a failure
  std::vector<long> eval_steps;
  GpiStatus status = GpiStatus::ok;
  std::string message;
  bool degenerate = false;
  long improvements_done = 0;
};

/// Runs policy iteration to completion, recording failures in the result.
GpiResult run_policy_iteration(const LQRSystem& sys, const GpiConfig& config);

/// As run_policy_iteration but rethrows IndefiniteMaa / Diverged.
GpiResult generalized_policy_iteration(const LQRSystem& sys, const GpiConfig& config);

/// run_id,seed,improvement_index,k_error_inf,eval_steps_used
std::vector<std::string> lqr_trace_header();
void append_lqr_trace(CsvWriter& out, const std::string& run_id, std::uint64_t seed,
                      const GpiResult& result);
void write_lqr_trace(const std::string& path, const std::string& run_id, std::uint64_t seed,
                     const GpiResult& result);

}  // namespace ignd
