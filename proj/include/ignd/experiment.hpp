#pragma once

// Experiment runner: flat key = value configs, multi-seed orchestration,
// learning-rate grid search and the output directory contract
// (config.txt, records.csv, plot.py, run.log).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ignd/optim.hpp"

namespace ignd {

enum class Family { supervised, frozenlake, cartpole, lqr, verify };

std::string_view to_string(Family family);
std::optional<Family> parse_family(std::string_view name);

/// Raw key = value settings. Keys are validated against a fixed registry;
/// "auto" values are resolved per family by resolve_config().
class ConfigMap {
 public:
  ConfigMap();

  static ConfigMap load(const std::filesystem::path& path);
  static ConfigMap parse(const std::string& text, const std::string& origin = "<config>");

  /// Throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  /// Sorted "key = value" lines; parse(snapshot()) round-trips.
  std::string snapshot() const;

  static const std::vector<std::pair<std::string, std::string>>& registry();

 private:
  std::map<std::string, std::string> values_;
};

struct AlphaGrid {
  double lo = 1e-9;
  double hi = 1.0;
  int n = 10;
};

/// Typed view of a resolved ConfigMap.
struct ExperimentConfig {
  Family family = Family::supervised;
  OptimConfig optim;
  double alpha = 0.1;
  double alpha_end = 0.1;
  std::uint64_t seed = 0;
  int seeds = 1;
  long steps = 0;
  long episodes = 0;
  long eval_every = 0;
  std::optional<AlphaGrid> grid;
  std::filesystem::path output_dir = "out";
  int jobs = 1;
  ConfigMap raw;  // fully resolved, no "auto" left

  std::vector<std::uint64_t> seed_list() const;
};

/// Resolves "auto" entries and validates every field; errors name the key.
ExperimentConfig resolve_config(ConfigMap raw);

/// n log-uniform points from lo to hi inclusive.
std::vector<double> logspace(double lo, double hi, int n);

enum class Direction { minimize, maximize };

/// Mean of the last `fraction` of `values` (at least one element).
double final_window_mean(const std::vector<double>& values, double fraction = 0.1);

struct CellOutcome {
  double final_metric = 0;
  bool diverged = false;
};

struct GridRow {
  double alpha = 0;
  double mean = 0;     // over non-diverged seeds
  double stddev = 0;
  int runs = 0;
  int diverged = 0;
};

struct GridResult {
  double best_alpha = 0;
  std::vector<GridRow> table;                  // one row per alpha, grid order
  std::vector<std::vector<CellOutcome>> cells;  // [alpha][seed]
};

/// Evaluates every (alpha, seed) cell, up to `jobs` at a time, and selects the
/// alpha with the fewest diverged seeds, then the best mean final metric.
/// Throws AllRunsDiverged when no cell finished.
GridResult grid_search(const std::vector<double>& alphas, const std::vector<std::uint64_t>& seeds,
                       const std::function<CellOutcome(double, std::uint64_t)>& objective,
                       Direction direction, int jobs = 1);

/// Runs `count` tasks with at most `jobs` threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& task);

/// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitDiverged = 3, kExitVerify = 4 };

/// Executes a resolved config and writes the output directory. Progress and
/// summaries go to `log` as well as run.log.
int run_experiment(const ExperimentConfig& config, std::ostream& log);

}  // namespace ignd
