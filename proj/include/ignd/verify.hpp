#pragma once

// Property suites and the end-to-end acceptance criteria. Each check returns
// a verdict plus a one-line summary of what it measured.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ignd {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0;
};

/// IGND step (alpha = 1, epsilon = 0) against the dense regularized
/// Gauss-Newton solve, on random linear and MLP problems with 2..30 weights.
CheckResult check_oracle_equivalence(int problems = 1000, std::uint64_t seed = 1,
                                     double tol = 1e-9);

/// r + grad r^T dw = 0 after every IGND step on the same problem family.
CheckResult check_linearized_residual(int problems = 1000, std::uint64_t seed = 1,
                                      double tol = 1e-10);

/// Reverse-mode MLP gradients against central differences (h = 1e-6).
/// Coordinates whose perturbation moves a ReLU pre-activation within 1e-7 of
/// zero are skipped; the error is |fd - g| / max(1, |g|).
CheckResult check_gradients(int cases = 200, std::uint64_t seed = 2, double tol = 1e-5);

/// Inverse-time schedule with alpha0 = b = 1: sum alpha >= 13 and sum alpha^2
/// within 1e-6 of pi^2 / 6 over `terms` terms.
CheckResult check_robbins_monro(long terms = 1000000);

/// CartPole-MP in [0, 5] and Acrobot-MP in [-17, 0] on random states, with
/// both endpoints attained.
CheckResult check_mp_reward_ranges(long samples = 100000, std::uint64_t seed = 3);

/// FrozenLake: scaled and unscaled IGNDQ agree per step; QL at its unscaled
/// best alpha collapses on scaled features while IGNDQ does not.
CheckResult check_frozenlake_scale_invariance(int seeds = 20);

/// LQR generalized policy iteration on the 2x1 and 4x2 systems.
CheckResult check_lqr_convergence(int seeds = 20, int jobs = 1);

/// Grid-best IGND vs grid-best SGD on housing-like regression.
CheckResult check_supervised_ordering(int seeds = 20, int jobs = 1);

/// IGNDQ on CartPole-MP against the random-policy baseline.
CheckResult check_cartpole(int seeds = 20, int jobs = 1);

/// Runs small experiments of every family twice from the same config snapshot
/// and compares records.csv byte for byte.
CheckResult check_determinism(const std::filesystem::path& scratch_dir);

/// The fast property suites used by the `verify` subcommand.
std::vector<CheckResult> run_property_checks();

}  // namespace ignd
