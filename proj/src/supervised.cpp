#include "ignd/supervised.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "ignd/csv.hpp"
#include "ignd/errors.hpp"

namespace ignd {

namespace {

bool parse_number(const std::string& text, double& out) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  if (begin == end) return false;
  const char* first = text.data() + begin;
  const char* last = text.data() + end;
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.columns = data.columns;
  out.target_name = data.target_name;
  out.features.reserve(rows.size());
  out.targets.reserve(rows.size());
  for (std::size_t r : rows) {
    out.features.push_back(data.features[r]);
    out.targets.push_back(data.targets[r]);
  }
  return out;
}

void require_equal_nonempty(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw EmptyInput("metric over an empty sequence");
  if (a.size() != b.size()) throw LengthMismatch("targets and predictions differ in length");
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const std::vector<ColumnSpec>& schema,
                 const std::string& target_column) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw EmptyInput(path.string() + ": missing header row");
  const auto header = split_csv_line(line);

  auto find_column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw MissingColumn("column '" + name + "' not in " + path.string());
    return static_cast<std::size_t>(it - header.begin());
  };

  std::vector<std::size_t> source(schema.size());
  Dataset data;
  data.target_name = target_column;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    source[c] = find_column(schema[c].name);
    data.columns.push_back({schema[c].name, schema[c].kind, {}});
  }
  const std::size_t target_src = find_column(target_column);

  std::vector<std::unordered_map<std::string, std::size_t>> codes(schema.size());
  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(row, std::min(cells.size(), header.size()),
                       "expected " + std::to_string(header.size()) + " cells, got " +
                           std::to_string(cells.size()));
    }
    Vector x(static_cast<Index>(schema.size()));
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const std::string& cell = cells[source[c]];
      if (schema[c].kind == ColumnKind::numeric) {
        double v = 0;
        if (!parse_number(cell, v)) throw ParseError(row, source[c], "not a number: '" + cell + "'");
        x[static_cast<Index>(c)] = v;
      } else {
        auto [it, inserted] = codes[c].try_emplace(cell, data.columns[c].categories.size());
        if (inserted) data.columns[c].categories.push_back(cell);
        x[static_cast<Index>(c)] = static_cast<double>(it->second);
      }
    }
    double y = 0;
    if (!parse_number(cells[target_src], y)) {
      throw ParseError(row, target_src, "not a number: '" + cells[target_src] + "'");
    }
    data.features.push_back(std::move(x));
    data.targets.push_back(y);
    ++row;
  }
  return data;
}

void save_csv(const std::filesystem::path& path, const Dataset& data) {
  std::vector<std::string> header;
  for (const auto& col : data.columns) header.push_back(col.name);
  header.push_back(data.target_name);
  CsvWriter out(path, header);
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < data.columns.size(); ++c) {
      const double v = data.features[r][static_cast<Index>(c)];
      if (data.columns[c].kind == ColumnKind::categorical) {
        out.field(std::string_view(data.columns[c].categories.at(static_cast<std::size_t>(v))));
      } else {
        out.field(v);
      }
    }
    out.field(data.targets[r]);
    out.end_row();
  }
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("split.train_fraction", "must lie in (0, 1)");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.shuffle_seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_int(static_cast<std::uint64_t>(i))]);
  }
  const auto n_train = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(data.size())));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<long>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<long>(n_train), order.end());
  return {subset(data, train), subset(data, test)};
}

Preprocessor Preprocessor::fit(const Dataset& train) {
  if (train.empty()) throw EmptyInput("Preprocessor::fit on an empty dataset");
  Preprocessor p;
  p.columns_ = train.columns;
  const std::size_t ncol = train.columns.size();
  p.means_.assign(ncol, 0.0);
  p.stddevs_.assign(ncol, 1.0);
  p.category_index_.resize(ncol);
  p.offsets_.resize(ncol);
  const double n = static_cast<double>(train.size());

  Index offset = 0;
  for (std::size_t c = 0; c < ncol; ++c) {
    const auto ci = static_cast<Index>(c);
    p.offsets_[c] = offset;
    if (train.columns[c].kind == ColumnKind::numeric) {
      double mean = 0;
      for (const auto& x : train.features) mean += x[ci];
      mean /= n;
      double var = 0;
      for (const auto& x : train.features) var += (x[ci] - mean) * (x[ci] - mean);
      var /= n;
      p.means_[c] = mean;
      p.stddevs_[c] = var > 0 ? std::sqrt(var) : 1.0;
      offset += 1;
    } else {
      // Category slots in order of first appearance in the train split.
      auto& index = p.category_index_[c];
      for (const auto& x : train.features) {
        const auto& name = train.columns[c].categories.at(static_cast<std::size_t>(x[ci]));
        index.try_emplace(name, static_cast<Index>(index.size()));
      }
      offset += static_cast<Index>(index.size());
    }
  }
  p.output_dim_ = offset;
  return p;
}

Dataset Preprocessor::transform(const Dataset& data, std::size_t* unseen) const {
  if (data.columns.size() != columns_.size()) {
    throw DimensionMismatch("Preprocessor::transform: column count differs from fit");
  }
  Dataset out;
  out.target_name = data.target_name;
  out.targets = data.targets;
  for (Index j = 0; j < output_dim_; ++j) out.columns.push_back({"x" + std::to_string(j), ColumnKind::numeric, {}});
  out.features.reserve(data.size());
  std::size_t missed = 0;
  for (const auto& x : data.features) {
    Vector z = Vector::Zero(output_dim_);
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      const auto ci = static_cast<Index>(c);
      if (columns_[c].kind == ColumnKind::numeric) {
        z[offsets_[c]] = (x[ci] - means_[c]) / stddevs_[c];
      } else {
        const auto& name = data.columns[c].categories.at(static_cast<std::size_t>(x[ci]));
        const auto it = category_index_[c].find(name);
        if (it == category_index_[c].end()) {
          ++missed;
        } else {
          z[offsets_[c] + it->second] = 1.0;
        }
      }
    }
    out.features.push_back(std::move(z));
  }
  if (unseen) *unseen += missed;
  return out;
}

Dataset make_housing_like(std::size_t n, Rng& rng) {
  Dataset d;
  d.target_name = "median_house_value";
  for (const char* name : {"median_income", "house_age", "ave_rooms", "ave_bedrooms", "population",
                           "ave_occupancy", "latitude", "longitude"}) {
    d.columns.push_back({name, ColumnKind::numeric, {}});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double income = std::clamp(std::exp(rng.normal(1.25, 0.45)), 0.5, 15.0);
    const double age = std::floor(rng.uniform(1.0, 53.0));
    const double rooms = std::max(1.0, rng.normal(4.5 + 0.25 * income, 1.0));
    const double bedrooms = std::max(0.5, rng.normal(1.05, 0.1) * rooms / 5.0);
    const double population = std::floor(std::exp(rng.normal(7.0, 0.7)));
    const double occupancy = std::max(1.0, rng.normal(2.9, 0.6));
    // Two coastal clusters plus an inland spread.
    const double cluster = rng.uniform();
    double lat = 0;
    double lon = 0;
    if (cluster < 0.4) {
      lat = rng.normal(34.05, 0.5);
      lon = rng.normal(-118.25, 0.5);
    } else if (cluster < 0.7) {
      lat = rng.normal(37.75, 0.5);
      lon = rng.normal(-122.3, 0.4);
    } else {
      lat = rng.uniform(33.0, 41.5);
      lon = rng.uniform(-123.5, -115.0);
    }
    const double la = (lat - 34.05) * (lat - 34.05) + (lon + 118.25) * (lon + 118.25);
    const double sf = (lat - 37.75) * (lat - 37.75) + (lon + 122.3) * (lon + 122.3);
    double y = 0.3 + 0.38 * income + 0.006 * age + 0.9 * std::exp(-la / 2.0) +
               1.3 * std::exp(-sf / 1.5) - 0.12 * std::log(occupancy) * income / 3.0 +
               0.05 * (rooms - 5.0) + rng.normal(0.0, 0.3);
    y = std::clamp(y, 0.15, 5.0);
    Vector x(8);
    x << income, age, rooms, bedrooms, population, occupancy, lat, lon;
    d.features.push_back(std::move(x));
    d.targets.push_back(y);
  }
  return d;
}

Dataset make_diamonds_like(std::size_t n, Rng& rng) {
  static const std::vector<std::string> cuts = {"Fair", "Good", "Very Good", "Premium", "Ideal"};
  static const std::vector<std::string> colors = {"J", "I", "H", "G", "F", "E", "D"};
  static const std::vector<std::string> clarities = {"I1",  "SI2",  "SI1",  "VS2",
                                                     "VS1", "VVS2", "VVS1", "IF"};
  Dataset d;
  d.target_name = "price";
  d.columns = {{"carat", ColumnKind::numeric, {}},   {"cut", ColumnKind::categorical, cuts},
               {"color", ColumnKind::categorical, colors},
               {"clarity", ColumnKind::categorical, clarities},
               {"depth", ColumnKind::numeric, {}},   {"table", ColumnKind::numeric, {}},
               {"x", ColumnKind::numeric, {}},       {"y", ColumnKind::numeric, {}},
               {"z", ColumnKind::numeric, {}}};
  for (std::size_t i = 0; i < n; ++i) {
    const double carat = std::clamp(std::exp(rng.normal(-0.4, 0.55)), 0.2, 5.0);
    const auto cut = rng.uniform_int(cuts.size());
    const auto color = rng.uniform_int(colors.size());
    const auto clarity = rng.uniform_int(clarities.size());
    const double depth = rng.normal(61.7, 1.4);
    const double table = rng.normal(57.4, 2.2);
    const double side = 6.45 * std::cbrt(carat);
    const double xdim = side * rng.normal(1.0, 0.01);
    const double ydim = side * rng.normal(1.0, 0.01);
    const double zdim = side * depth / 100.0;
    const double log_price = 8.45 + 1.75 * std::log(carat) + 0.04 * static_cast<double>(cut) +
                             0.07 * static_cast<double>(color) +
                             0.09 * static_cast<double>(clarity) + rng.normal(0.0, 0.15);
    Vector x(9);
    x << carat, static_cast<double>(cut), static_cast<double>(color), static_cast<double>(clarity),
        depth, table, xdim, ydim, zdim;
    d.features.push_back(std::move(x));
    d.targets.push_back(std::clamp(std::exp(log_price), 326.0, 18823.0));
  }
  return d;
}

Dataset make_linear_dataset(std::size_t n, const Vector& coefficients, Rng& rng) {
  Dataset d;
  for (Index j = 0; j < coefficients.size(); ++j) d.columns.push_back({"x" + std::to_string(j), ColumnKind::numeric, {}});
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(coefficients.size());
    for (Index j = 0; j < x.size(); ++j) x[j] = rng.normal();
    d.targets.push_back(coefficients.dot(x));
    d.features.push_back(std::move(x));
  }
  return d;
}

double mse(const std::vector<double>& targets, const std::vector<double>& predictions) {
  require_equal_nonempty(targets, predictions);
  double sum = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double r = targets[i] - predictions[i];
    sum += r * r;
  }
  return 0.5 * sum / static_cast<double>(targets.size());
}

double mape(const std::vector<double>& targets, const std::vector<double>& predictions) {
  require_equal_nonempty(targets, predictions);
  double sum = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    sum += std::abs(targets[i] - predictions[i]) / std::max(1e-15, std::abs(targets[i]));
  }
  return sum / static_cast<double>(targets.size());
}

std::vector<double> predict_all(const Model& model, const Vector& w, const Dataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  if (const auto* mlp = std::get_if<Mlp>(&model)) {
    Mlp::Workspace ws;
    for (const auto& x : data.features) out.push_back(mlp->predict(w, x, ws));
  } else {
    for (const auto& x : data.features) out.push_back(predict(model, w, x));
  }
  return out;
}

std::vector<std::string> run_record_header() { return {"run_id", "seed", "step", "metric", "value"}; }

void append_run_records(CsvWriter& out, const std::vector<RunRecord>& records) {
  for (const auto& r : records) {
    out.field(std::string_view(r.run_id))
        .field(r.seed)
        .field(static_cast<std::int64_t>(r.step))
        .field(std::string_view(r.metric))
        .field(r.value);
    out.end_row();
  }
}

TrainResult train_incremental(const OptimConfig& config, const Model& model, const Dataset& train,
                              const Dataset& test, const TrainOptions& options) {
  Rng init_rng = Rng(options.seed).split(1);
  return train_incremental(config, model, initial_weights(model, init_rng), train, test, options);
}

TrainResult train_incremental(const OptimConfig& config, const Model& model, Vector w0,
                              const Dataset& train, const Dataset& test,
                              const TrainOptions& options) {
  if (train.empty()) throw EmptyInput("train_incremental: empty training set");
  if (w0.size() != param_count(model)) throw DimensionMismatch("train_incremental: w0 size");
  if (options.eval_every <= 0) throw ConfigError("eval_every", "must be positive");

  TrainResult result;
  result.weights = std::move(w0);
  Vector& w = result.weights;
  Rng sampler = Rng(options.seed).split(2);
  OptimState state;
  const Mlp* mlp = std::get_if<Mlp>(&model);
  Mlp::Workspace ws;
  double xi_sum = 0;
  long xi_count = 0;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  auto emit = [&](long t, const char* metric, double value) {
    result.records.push_back({options.run_id, options.seed, t, metric, value});
  };
  auto evaluate = [&](long t) {
    if (options.evaluate_train) emit(t, "train_mse", mse(train.targets, predict_all(model, w, train)));
    if (!test.empty()) {
      const auto pred = predict_all(model, w, test);
      result.final_test_mse = mse(test.targets, pred);
      emit(t, "test_mse", result.final_test_mse);
      emit(t, "test_mape", mape(test.targets, pred));
    }
    emit(t, "xi_mean", xi_count > 0 ? xi_sum / static_cast<double>(xi_count) : nan);
    emit(t, "grad_sq_max", state.max_grad_sq_seen);
    xi_sum = 0;
    xi_count = 0;
  };

  for (long t = 1; t <= options.steps; ++t) {
    const auto i = static_cast<std::size_t>(sampler.uniform_int(train.size()));
    const GradEval ev = mlp ? mlp->eval(w, train.features[i], train.targets[i], ws)
                            : eval_with_gradient(model, w, train.features[i], train.targets[i]);
    const StepDiagnostics diag = step(config, state, w, ev);
    xi_sum += diag.xi;
    ++xi_count;
    if (!all_finite(w)) {
      result.diverged = true;
      result.final_test_mse = nan;
      for (const char* m : {"train_mse", "test_mse", "test_mape"}) emit(t, m, nan);
      emit(t, "xi_mean", xi_sum / static_cast<double>(xi_count));
      emit(t, "grad_sq_max", state.max_grad_sq_seen);
      break;
    }
    if (t % options.eval_every == 0 || t == options.steps) evaluate(t);
  }
  return result;
}

}  // namespace ignd
