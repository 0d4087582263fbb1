#pragma once

// Least-squares regression: CSV ingestion, preprocessing, the incremental
// training loop and its metrics.

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "ignd/csv.hpp"
#include "ignd/model.hpp"
#include "ignd/optim.hpp"
#include "ignd/rng.hpp"
#include "ignd/types.hpp"

namespace ignd {

enum class ColumnKind { numeric, categorical };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
};

/// Categorical cells are stored in `features` as the index into `categories`.
struct ColumnMeta {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<std::string> categories;
};

struct Dataset {
  std::vector<Vector> features;
  std::vector<double> targets;
  std::vector<ColumnMeta> columns;
  std::string target_name = "target";

  std::size_t size() const { return targets.size(); }
  bool empty() const { return targets.empty(); }
};

Dataset load_csv(const std::filesystem::path& path, const std::vector<ColumnSpec>& schema,
                 const std::string& target_column);
void save_csv(const std::filesystem::path& path, const Dataset& data);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t shuffle_seed = 0;
};

/// Shuffled disjoint split; the train part gets round(fraction * N) rows.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, const SplitSpec& spec);

/// z-scores numeric columns and one-hot encodes categorical ones, with all
/// statistics taken from the data passed to fit().
class Preprocessor {
 public:
  static Preprocessor fit(const Dataset& train);

  /// Categories unseen at fit time encode as an all-zero block; their count is
  /// added to `unseen` when given.
  Dataset transform(const Dataset& data, std::size_t* unseen = nullptr) const;

  Index output_dim() const { return output_dim_; }
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& stddevs() const { return stddevs_; }

 private:
  std::vector<ColumnMeta> columns_;
  std::vector<double> means_;
  std::vector<double> stddevs_;
  std::vector<std::unordered_map<std::string, Index>> category_index_;
  std::vector<Index> offsets_;
  Index output_dim_ = 0;
};

/// Synthetic stand-ins for the two regression benchmarks: eight numeric
/// housing-style columns, or diamond-style numeric plus categorical columns.
Dataset make_housing_like(std::size_t n, Rng& rng);
Dataset make_diamonds_like(std::size_t n, Rng& rng);

/// Noise-free y = a^T x, x ~ N(0, I); used for interpolation checks.
Dataset make_linear_dataset(std::size_t n, const Vector& coefficients, Rng& rng);

/// 1/2 * mean squared residual.
double mse(const std::vector<double>& targets, const std::vector<double>& predictions);
/// mean |y - f| / max(1e-15, |y|).
double mape(const std::vector<double>& targets, const std::vector<double>& predictions);

std::vector<double> predict_all(const Model& model, const Vector& w, const Dataset& data);

/// One CSV-emittable metric observation.
struct RunRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  long step = 0;
  std::string metric;
  double value = 0;
};

/// run_id,seed,step,metric,value
std::vector<std::string> run_record_header();
void append_run_records(CsvWriter& out, const std::vector<RunRecord>& records);

struct TrainOptions {
  long steps = 10000;
  long eval_every = 1000;
  std::string run_id = "run";
  std::uint64_t seed = 0;
  bool evaluate_train = true;  // train_mse over the full train split
};

struct TrainResult {
  std::vector<RunRecord> records;
  Vector weights;
  bool diverged = false;
  double final_test_mse = 0;
};

/// Incremental training: each step draws one train sample uniformly with
/// replacement and applies one optimizer update. Deterministic in `seed`.
TrainResult train_incremental(const OptimConfig& config, const Model& model, const Dataset& train,
                              const Dataset& test, const TrainOptions& options);

/// Same loop from caller-supplied initial weights.
TrainResult train_incremental(const OptimConfig& config, const Model& model, Vector w0,
                              const Dataset& train, const Dataset& test,
                              const TrainOptions& options);

}  // namespace ignd
