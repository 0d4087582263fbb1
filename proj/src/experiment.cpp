#include "ignd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "ignd/cartpole.hpp"
#include "ignd/csv.hpp"
#include "ignd/errors.hpp"
#include "ignd/frozenlake.hpp"
#include "ignd/lqr.hpp"
#include "ignd/supervised.hpp"
#include "ignd/verify.hpp"

namespace ignd {

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

double parse_double(const ConfigMap& m, const std::string& key) {
  const std::string& text = m.get(key);
  double v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError(key, "expected a finite number, got '" + text + "'");
  }
  return v;
}

long parse_long(const ConfigMap& m, const std::string& key) {
  const std::string& text = m.get(key);
  long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(key, "expected an integer, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_u64(const ConfigMap& m, const std::string& key) {
  const std::string& text = m.get(key);
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(key, "expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const ConfigMap& m, const std::string& key) {
  const std::string& text = m.get(key);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

std::vector<Index> parse_widths(const ConfigMap& m, const std::string& key) {
  std::vector<Index> out;
  std::stringstream ss(m.get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    long v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size() || v < 1) {
      throw ConfigError(key, "expected comma-separated positive widths, got '" + m.get(key) + "'");
    }
    out.push_back(v);
  }
  return out;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Everything a cell needs that is shared read-only across seeds.
struct RunContext {
  Dataset train;
  Dataset test;
  std::size_t unseen_categories = 0;
  std::optional<Model> model;
  std::optional<LQRSystem> system;
};

struct CellResult {
  std::string rows;
  CellOutcome outcome;
  std::string note;
};

std::vector<ColumnSpec> parse_columns(const ConfigMap& m) {
  std::vector<ColumnSpec> out;
  std::stringstream ss(m.get("supervised.columns"));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (t.empty()) continue;
    const auto colon = t.rfind(':');
    ColumnSpec spec{t, ColumnKind::numeric};
    if (colon != std::string::npos) {
      spec.name = t.substr(0, colon);
      const std::string kind = t.substr(colon + 1);
      if (kind == "cat") {
        spec.kind = ColumnKind::categorical;
      } else {
        require(kind == "num", "supervised.columns", "column kind must be num or cat");
      }
    }
    out.push_back(spec);
  }
  return out;
}

RunContext prepare(const ExperimentConfig& c) {
  RunContext ctx;
  const ConfigMap& m = c.raw;
  if (c.family == Family::supervised) {
    const std::string dataset = m.get("supervised.dataset");
    Rng data_rng(parse_u64(m, "supervised.data_seed"));
    const auto n = static_cast<std::size_t>(parse_long(m, "supervised.samples"));
    Dataset raw;
    if (dataset == "housing") {
      raw = make_housing_like(n, data_rng);
    } else if (dataset == "diamonds") {
      raw = make_diamonds_like(n, data_rng);
    } else if (dataset == "linear") {
      Vector coeffs(8);
      for (Index j = 0; j < coeffs.size(); ++j) coeffs[j] = data_rng.normal();
      raw = make_linear_dataset(n, coeffs, data_rng);
    } else {
      raw = load_csv(m.get("supervised.csv"), parse_columns(m), m.get("supervised.target"));
    }
    require(raw.size() >= 2, "supervised.samples", "need at least two rows");
    auto [train, test] = split_dataset(
        raw, {parse_double(m, "supervised.train_fraction"), parse_u64(m, "supervised.split_seed")});
    const Preprocessor pre = Preprocessor::fit(train);
    ctx.train = pre.transform(train);
    ctx.test = pre.transform(test, &ctx.unseen_categories);
    if (m.get("supervised.model") == "linear") {
      ctx.model = LinearModel(pre.output_dim());
    } else {
      ctx.model = Mlp(pre.output_dim(), relu_network(parse_widths(m, "supervised.hidden")));
    }
  } else if (c.family == Family::lqr) {
    const std::string name = m.get("lqr.system");
    const auto names = builtin_system_names();
    ctx.system = std::find(names.begin(), names.end(), name) != names.end() ? builtin_system(name)
                                                                           : load_system(name);
  }
  return ctx;
}

std::string run_id_for(const ExperimentConfig& c, double alpha) {
  std::string id = std::string(to_string(c.optim.rule)) + "_alpha=" + format_double(alpha);
  if (c.family == Family::frozenlake && parse_long(c.raw, "frozenlake.phi_bound") > 0) id += "_scaled";
  return id;
}

CellResult run_cell(const ExperimentConfig& c, const RunContext& ctx, double alpha,
                    std::uint64_t seed) {
  const ConfigMap& m = c.raw;
  CellResult out;
  std::ostringstream rows;
  CsvWriter csv(rows);
  const std::string run_id = run_id_for(c, alpha);
  OptimConfig optim = c.optim;
  optim.alpha = LRSchedule::constant(alpha);

  switch (c.family) {
    case Family::supervised: {
      TrainOptions opt;
      opt.steps = c.steps;
      opt.eval_every = c.eval_every;
      opt.run_id = run_id;
      opt.seed = seed;
      const TrainResult r = train_incremental(optim, *ctx.model, ctx.train, ctx.test, opt);
      std::vector<RunRecord> records = r.records;
      if (ctx.unseen_categories > 0) {
        records.insert(records.begin(), {run_id, seed, 0, "unseen_categories",
                                         static_cast<double>(ctx.unseen_categories)});
      }
      append_run_records(csv, records);
      std::vector<double> test_mse;
      for (const auto& rec : r.records) {
        if (rec.metric == "test_mse") test_mse.push_back(rec.value);
      }
      out.outcome.diverged = r.diverged;
      out.outcome.final_metric =
          test_mse.empty() ? std::numeric_limits<double>::quiet_NaN() : final_window_mean(test_mse);
      break;
    }
    case Family::frozenlake: {
      GridWorld env;
      env.slippery = parse_bool(m, "frozenlake.slippery");
      TabularConfig tc;
      tc.optim = optim;
      tc.exploration = parse_double(m, "frozenlake.exploration");
      tc.gamma = parse_double(m, "frozenlake.gamma");
      tc.steps = c.steps;
      tc.seed = seed;
      const long bound = parse_long(m, "frozenlake.phi_bound");
      if (bound > 0) {
        Rng phi_rng = Rng(seed).split(99);
        tc.phi = draw_phi(env.n_states() * GridWorld::n_actions, bound, phi_rng);
      }
      const TabularResult r = tabular_q_learning(env, tc);
      append_learning_curve(csv, run_id, seed, r.episodes);
      out.outcome.diverged = !all_finite(r.weights);
      out.outcome.final_metric = final_mean_return(r);
      break;
    }
    case Family::cartpole: {
      DeepQConfig dc;
      dc.optim = optim;
      dc.episodes = c.episodes;
      dc.seed = seed;
      dc.net.hidden = parse_widths(m, "cartpole.hidden");
      dc.net.gamma = parse_double(m, "cartpole.gamma");
      dc.net.target_update_period = parse_long(m, "cartpole.target_update_period");
      dc.net.exploration_start = parse_double(m, "cartpole.exploration_start");
      dc.net.exploration_end = parse_double(m, "cartpole.exploration_end");
      dc.net.exploration_fraction = parse_double(m, "cartpole.exploration_fraction");
      dc.net.anneal_steps = parse_long(m, "cartpole.anneal_steps");
      dc.net.reward = m.get("cartpole.reward") == "original" ? CartPoleReward::original
                                                            : CartPoleReward::mp;
      const DeepQResult r = deep_q_train(dc);
      append_deep_learning_curve(csv, run_id, seed, r.episodes);
      std::vector<double> returns;
      for (const auto& e : r.episodes) returns.push_back(e.ret);
      out.outcome.diverged = r.diverged;
      out.outcome.final_metric = returns.empty() ? 0.0 : final_window_mean(returns);
      break;
    }
    case Family::lqr: {
      GpiConfig gc;
      gc.eval.rule = c.optim.rule;
      gc.eval.epsilon = c.optim.epsilon;
      gc.eval.max_steps = c.steps;
      gc.eval.exploration_variance = parse_double(m, "lqr.exploration_variance");
      gc.eval.tol = parse_double(m, "lqr.tol");
      gc.eval.init_state_scale = parse_double(m, "lqr.init_state_scale");
      gc.eval.restart_every = parse_long(m, "lqr.restart_every");
      gc.improvements = parse_long(m, "lqr.improvements");
      gc.k0_entry = parse_double(m, "lqr.k0");
      gc.warm_start = parse_bool(m, "lqr.warm_start");
      gc.scope = m.get("lqr.schedule_scope") == "per_evaluation" ? ScheduleScope::per_evaluation
                                                                 : ScheduleScope::global;
      const double end = c.alpha_end * alpha / c.alpha;  // keep the start/end ratio under a grid
      gc.eval.alpha = LRSchedule::geometric(alpha, end, gc.eval.max_steps * gc.improvements);
      gc.seed = seed;
      const GpiResult r = run_policy_iteration(*ctx.system, gc);
      append_lqr_trace(csv, run_id, seed, r);
      out.outcome.diverged = r.status != GpiStatus::ok;
      out.outcome.final_metric = final_window_mean(r.k_error_trace);
      if (r.degenerate) out.note = "B = 0: the policy cannot affect the state (degenerate system)";
      if (r.status != GpiStatus::ok) out.note = r.message;
      break;
    }
    case Family::verify:
      break;
  }
  out.rows = rows.str();
  return out;
}

std::vector<std::string> header_for(Family family) {
  switch (family) {
    case Family::supervised:
      return run_record_header();
    case Family::frozenlake:
      return learning_curve_header();
    case Family::cartpole:
      return deep_learning_curve_header();
    case Family::lqr:
      return lqr_trace_header();
    case Family::verify:
      return {"check", "passed", "detail"};
  }
  return {};
}

std::string plot_script(Family family) {
  std::string x = "step";
  std::string y = "value";
  std::string logy = "False";
  std::string group = "metric";
  switch (family) {
    case Family::supervised:
      logy = "True";
      break;
    case Family::frozenlake:
    case Family::cartpole:
      x = "episode";
      y = "return";
      group = "";
      break;
    case Family::lqr:
      x = "improvement_index";
      y = "k_error_inf";
      logy = "True";
      group = "";
      break;
    case Family::verify:
      x = "check";
      y = "passed";
      group = "";
      break;
  }
  std::ostringstream s;
  s << "#!/usr/bin/env python3\n"
       "\"\"\"Mean +/- 1 standard deviation over seeds for every run_id in records.csv.\"\"\"\n"
       "import csv\nimport math\nimport os\nimport sys\nfrom collections import defaultdict\n\n"
       "import matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\n"
    << "X = \"" << x << "\"\nY = \"" << y << "\"\nGROUP = \"" << group << "\"\nLOGY = " << logy
    << "\n\n"
       "here = os.path.dirname(os.path.abspath(__file__))\n"
       "path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, \"records.csv\")\n"
       "series = defaultdict(lambda: defaultdict(dict))\n"
       "with open(path, newline=\"\") as f:\n"
       "    for row in csv.DictReader(f):\n"
       "        try:\n"
       "            xv, yv = float(row[X]), float(row[Y])\n"
       "        except (KeyError, ValueError):\n"
       "            continue\n"
       "        panel = row[GROUP] if GROUP else Y\n"
       "        series[panel][row[\"run_id\"]].setdefault(xv, []).append(yv)\n\n"
       "if not series:\n"
       "    sys.exit(\"no plottable rows in \" + path)\n"
       "fig, axes = plt.subplots(len(series), 1, figsize=(7, 3.5 * len(series)), squeeze=False)\n"
       "for ax, (panel, runs) in zip(axes[:, 0], sorted(series.items())):\n"
       "    for run_id, points in sorted(runs.items()):\n"
       "        xs = sorted(points)\n"
       "        finite = [[v for v in points[k] if math.isfinite(v)] for k in xs]\n"
       "        mean = [sum(v) / len(v) if v else float(\"nan\") for v in finite]\n"
       "        std = [math.sqrt(sum((u - m) ** 2 for u in v) / len(v)) if v else float(\"nan\")\n"
       "               for v, m in zip(finite, mean)]\n"
       "        ax.plot(xs, mean, linewidth=2, label=run_id)\n"
       "        ax.fill_between(xs, [m - s for m, s in zip(mean, std)],\n"
       "                        [m + s for m, s in zip(mean, std)], alpha=0.25)\n"
       "    ax.set_xlabel(X)\n"
       "    ax.set_ylabel(panel)\n"
       "    if LOGY:\n"
       "        ax.set_yscale(\"log\")\n"
       "    ax.legend(fontsize=\"small\")\n"
       "fig.tight_layout()\n"
       "out = os.path.join(here, \"plot.png\") if len(sys.argv) < 3 else sys.argv[2]\n"
       "fig.savefig(out, dpi=150)\n"
       "print(\"wrote\", out)\n";
  return s.str();
}

GridResult summarize_grid(const std::vector<double>& alphas,
                          std::vector<std::vector<CellOutcome>> cells, Direction direction) {
  GridResult result;
  result.cells = std::move(cells);
  bool any_finished = false;
  std::optional<std::size_t> best;
  auto better = [&](const GridRow& a, const GridRow& b) {
    if (a.diverged != b.diverged) return a.diverged < b.diverged;
    return direction == Direction::minimize ? a.mean < b.mean : a.mean > b.mean;
  };
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    GridRow row;
    row.alpha = alphas[i];
    std::vector<double> ok;
    for (const auto& cell : result.cells[i]) {
      ++row.runs;
      if (cell.diverged || !std::isfinite(cell.final_metric)) {
        ++row.diverged;
      } else {
        ok.push_back(cell.final_metric);
      }
    }
    row.mean = std::numeric_limits<double>::quiet_NaN();
    row.stddev = std::numeric_limits<double>::quiet_NaN();
    if (!ok.empty()) {
      any_finished = true;
      double sum = 0;
      for (double v : ok) sum += v;
      row.mean = sum / static_cast<double>(ok.size());
      double var = 0;
      for (double v : ok) var += (v - row.mean) * (v - row.mean);
      row.stddev = std::sqrt(var / static_cast<double>(ok.size()));
      if (!best || better(row, result.table[*best])) best = i;
    }
    result.table.push_back(row);
  }
  if (!any_finished) throw AllRunsDiverged();
  result.best_alpha = alphas[*best];
  return result;
}

}  // namespace

std::string_view to_string(Family family) {
  switch (family) {
    case Family::supervised:
      return "supervised";
    case Family::frozenlake:
      return "frozenlake";
    case Family::cartpole:
      return "cartpole";
    case Family::lqr:
      return "lqr";
    case Family::verify:
      return "verify";
  }
  return "?";
}

std::optional<Family> parse_family(std::string_view name) {
  for (Family f : {Family::supervised, Family::frozenlake, Family::cartpole, Family::lqr,
                   Family::verify}) {
    if (to_string(f) == name) return f;
  }
  return std::nullopt;
}

const std::vector<std::pair<std::string, std::string>>& ConfigMap::registry() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"family", "supervised"},
      {"optimizer", "ignd"},
      {"alpha", "auto"},
      {"alpha_end", "auto"},
      {"epsilon", "auto"},
      {"eta", "1"},
      {"beta_ngd", "1e-08"},
      {"adam.beta1", "0.9"},
      {"adam.beta2", "0.999"},
      {"adam.eps", "1e-08"},
      {"seed", "0"},
      {"seeds", "1"},
      {"steps", "auto"},
      {"episodes", "auto"},
      {"eval_every", "auto"},
      {"grid.lo", "1e-09"},
      {"grid.hi", "1"},
      {"grid.n", "0"},
      {"output_dir", "out"},
      {"jobs", "1"},
      {"supervised.dataset", "housing"},
      {"supervised.samples", "5000"},
      {"supervised.data_seed", "0"},
      {"supervised.csv", ""},
      {"supervised.columns", ""},
      {"supervised.target", ""},
      {"supervised.model", "mlp"},
      {"supervised.hidden", "32,64,32"},
      {"supervised.train_fraction", "0.8"},
      {"supervised.split_seed", "0"},
      {"frozenlake.exploration", "0.1"},
      {"frozenlake.gamma", "0.99"},
      {"frozenlake.phi_bound", "0"},
      {"frozenlake.slippery", "false"},
      {"cartpole.gamma", "0.99"},
      {"cartpole.target_update_period", "100"},
      {"cartpole.hidden", "32,64,32"},
      {"cartpole.exploration_start", "1"},
      {"cartpole.exploration_end", "0.05"},
      {"cartpole.exploration_fraction", "1"},
      {"cartpole.anneal_steps", "10000"},
      {"cartpole.reward", "mp"},
      {"lqr.system", "2x1"},
      {"lqr.improvements", "50"},
      {"lqr.exploration_variance", "auto"},
      {"lqr.k0", "-0.01"},
      {"lqr.warm_start", "true"},
      {"lqr.schedule_scope", "global"},
      {"lqr.init_state_scale", "1"},
      {"lqr.restart_every", "0"},
      {"lqr.tol", "1e-08"},
  };
  return keys;
}

ConfigMap::ConfigMap() {
  for (const auto& [key, value] : registry()) values_[key] = value;
}

ConfigMap ConfigMap::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config", "cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

ConfigMap ConfigMap::parse(const std::string& text, const std::string& origin) {
  ConfigMap m;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config", origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    m.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  return m;
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "unknown configuration key");
  it->second = value;
}

const std::string& ConfigMap::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "unknown configuration key");
  return it->second;
}

std::string ConfigMap::snapshot() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << " = " << value << '\n';
  return os.str();
}

std::vector<std::uint64_t> ExperimentConfig::seed_list() const {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < seeds; ++i) out.push_back(seed + static_cast<std::uint64_t>(i));
  return out;
}

ExperimentConfig resolve_config(ConfigMap raw) {
  ExperimentConfig c;
  const auto family = parse_family(raw.get("family"));
  require(family.has_value(), "family", "must be one of supervised, frozenlake, cartpole, lqr, verify");
  c.family = *family;

  const auto rule = parse_rule(raw.get("optimizer"));
  require(rule.has_value(), "optimizer", "unknown optimizer '" + raw.get("optimizer") + "'");
  c.optim.rule = *rule;
  const bool rl = c.family == Family::frozenlake || c.family == Family::cartpole ||
                  c.family == Family::lqr;
  if (rl) {
    require(c.optim.rule == Rule::sgd || c.optim.rule == Rule::ignd, "optimizer",
            "reinforcement-learning families accept ql (sgd) or igndq (ignd)");
  }

  auto resolve = [&](const std::string& key, const std::string& value) {
    if (raw.get(key) == "auto") raw.set(key, value);
  };
  const bool ql = c.optim.rule == Rule::sgd;
  switch (c.family) {
    case Family::supervised:
      resolve("alpha", "0.1");
      resolve("steps", "10000");
      resolve("episodes", "0");
      resolve("eval_every", std::to_string(std::max(1L, parse_long(raw, "steps") / 20)));
      break;
    case Family::frozenlake:
      resolve("alpha", "0.5");
      resolve("epsilon", "0");
      resolve("steps", "5000");
      break;
    case Family::cartpole:
      resolve("alpha", "0.1");
      resolve("steps", "0");
      resolve("episodes", "300");
      break;
    case Family::lqr:
      resolve("alpha", ql ? "6e-07" : "1");
      resolve("alpha_end", ql ? "1e-08" : "0.001");
      resolve("steps", "1000");
      resolve("lqr.exploration_variance", "0.01");
      break;
    case Family::verify:
      break;
  }
  resolve("alpha", "0.1");
  resolve("alpha_end", raw.get("alpha"));
  resolve("epsilon", "1e-08");
  resolve("steps", "0");
  resolve("episodes", "0");
  resolve("eval_every", "0");
  resolve("lqr.exploration_variance", "0.01");

  c.alpha = parse_double(raw, "alpha");
  c.alpha_end = parse_double(raw, "alpha_end");
  require(c.alpha > 0, "alpha", "must be positive");
  require(c.alpha_end > 0, "alpha_end", "must be positive");
  c.optim.alpha = LRSchedule::constant(c.alpha);
  c.optim.epsilon = parse_double(raw, "epsilon");
  require(c.optim.epsilon >= 0, "epsilon", "must be non-negative");
  c.optim.eta = parse_double(raw, "eta");
  require(c.optim.eta > 0, "eta", "must be positive");
  c.optim.beta_ngd = parse_double(raw, "beta_ngd");
  require(c.optim.beta_ngd >= 0, "beta_ngd", "must be non-negative");
  c.optim.adam_beta1 = parse_double(raw, "adam.beta1");
  c.optim.adam_beta2 = parse_double(raw, "adam.beta2");
  c.optim.adam_eps = parse_double(raw, "adam.eps");
  require(c.optim.adam_beta1 >= 0 && c.optim.adam_beta1 < 1, "adam.beta1", "must lie in [0, 1)");
  require(c.optim.adam_beta2 >= 0 && c.optim.adam_beta2 < 1, "adam.beta2", "must lie in [0, 1)");
  require(c.optim.adam_eps > 0, "adam.eps", "must be positive");

  c.seed = parse_u64(raw, "seed");
  const long seeds = parse_long(raw, "seeds");
  require(seeds >= 1 && seeds <= 100000, "seeds", "must lie in [1, 100000]");
  c.seeds = static_cast<int>(seeds);
  c.steps = parse_long(raw, "steps");
  require(c.steps >= 0, "steps", "must be non-negative");
  c.episodes = parse_long(raw, "episodes");
  require(c.episodes >= 0, "episodes", "must be non-negative");
  c.eval_every = parse_long(raw, "eval_every");
  if (c.family == Family::supervised) require(c.eval_every >= 1, "eval_every", "must be positive");

  const long grid_n = parse_long(raw, "grid.n");
  require(grid_n == 0 || grid_n >= 2, "grid.n", "must be 0 (off) or at least 2");
  if (grid_n >= 2) {
    AlphaGrid g{parse_double(raw, "grid.lo"), parse_double(raw, "grid.hi"), static_cast<int>(grid_n)};
    require(g.lo > 0, "grid.lo", "must be positive");
    require(g.hi > g.lo, "grid.hi", "must exceed grid.lo");
    c.grid = g;
  }
  c.output_dir = raw.get("output_dir");
  require(!c.output_dir.empty(), "output_dir", "must not be empty");
  const long jobs = parse_long(raw, "jobs");
  require(jobs >= 1 && jobs <= 1024, "jobs", "must lie in [1, 1024]");
  c.jobs = static_cast<int>(jobs);

  // Section checks for the active family only.
  switch (c.family) {
    case Family::supervised: {
      const std::string ds = raw.get("supervised.dataset");
      require(ds == "housing" || ds == "diamonds" || ds == "linear" || ds == "csv",
              "supervised.dataset", "must be housing, diamonds, linear or csv");
      if (ds == "csv") {
        require(!raw.get("supervised.csv").empty(), "supervised.csv", "path required for csv data");
        require(!raw.get("supervised.target").empty(), "supervised.target", "target column required");
        parse_columns(raw);
      } else {
        require(parse_long(raw, "supervised.samples") >= 2, "supervised.samples", "must be at least 2");
      }
      parse_u64(raw, "supervised.data_seed");
      parse_u64(raw, "supervised.split_seed");
      const std::string model = raw.get("supervised.model");
      require(model == "mlp" || model == "linear", "supervised.model", "must be mlp or linear");
      parse_widths(raw, "supervised.hidden");
      const double frac = parse_double(raw, "supervised.train_fraction");
      require(frac > 0 && frac < 1, "supervised.train_fraction", "must lie in (0, 1)");
      break;
    }
    case Family::frozenlake: {
      const double e = parse_double(raw, "frozenlake.exploration");
      require(e >= 0 && e <= 1, "frozenlake.exploration", "must lie in [0, 1]");
      const double g = parse_double(raw, "frozenlake.gamma");
      require(g >= 0 && g <= 1, "frozenlake.gamma", "must lie in [0, 1]");
      require(parse_long(raw, "frozenlake.phi_bound") >= 0, "frozenlake.phi_bound",
              "must be non-negative");
      parse_bool(raw, "frozenlake.slippery");
      break;
    }
    case Family::cartpole: {
      const double g = parse_double(raw, "cartpole.gamma");
      require(g >= 0 && g <= 1, "cartpole.gamma", "must lie in [0, 1]");
      require(parse_long(raw, "cartpole.target_update_period") >= 1,
              "cartpole.target_update_period", "must be at least 1");
      parse_widths(raw, "cartpole.hidden");
      for (const char* key : {"cartpole.exploration_start", "cartpole.exploration_end"}) {
        const double v = parse_double(raw, key);
        require(v >= 0 && v <= 1, key, "must lie in [0, 1]");
      }
      require(parse_double(raw, "cartpole.exploration_fraction") >= 0,
              "cartpole.exploration_fraction", "must be non-negative");
      require(parse_long(raw, "cartpole.anneal_steps") >= 0, "cartpole.anneal_steps",
              "must be non-negative");
      const std::string reward = raw.get("cartpole.reward");
      require(reward == "mp" || reward == "original", "cartpole.reward", "must be mp or original");
      break;
    }
    case Family::lqr: {
      require(!raw.get("lqr.system").empty(), "lqr.system", "built-in name or system file required");
      require(parse_long(raw, "lqr.improvements") >= 1, "lqr.improvements", "must be at least 1");
      require(parse_double(raw, "lqr.exploration_variance") >= 0, "lqr.exploration_variance",
              "must be non-negative");
      parse_double(raw, "lqr.k0");
      parse_bool(raw, "lqr.warm_start");
      const std::string scope = raw.get("lqr.schedule_scope");
      require(scope == "global" || scope == "per_evaluation", "lqr.schedule_scope",
              "must be global or per_evaluation");
      require(parse_double(raw, "lqr.init_state_scale") >= 0, "lqr.init_state_scale",
              "must be non-negative");
      require(parse_long(raw, "lqr.restart_every") >= 0, "lqr.restart_every", "must be non-negative");
      require(parse_double(raw, "lqr.tol") >= 0, "lqr.tol", "must be non-negative");
      break;
    }
    case Family::verify:
      break;
  }
  c.raw = std::move(raw);
  return c;
}

std::vector<double> logspace(double lo, double hi, int n) {
  if (n < 2) throw ConfigError("grid.n", "must be at least 2");
  if (!(lo > 0 && hi > lo)) throw ConfigError("grid", "need 0 < lo < hi");
  std::vector<double> out(static_cast<std::size_t>(n));
  const double llo = std::log10(lo);
  const double lhi = std::log10(hi);
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = std::pow(10.0, llo + (lhi - llo) * i / (n - 1));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

double final_window_mean(const std::vector<double>& values, double fraction) {
  if (values.empty()) throw EmptyInput("final_window_mean of an empty sequence");
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(values.size()))));
  double sum = 0;
  for (std::size_t i = values.size() - n; i < values.size(); ++i) sum += values[i];
  return sum / static_cast<double>(n);
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& task) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

GridResult grid_search(const std::vector<double>& alphas, const std::vector<std::uint64_t>& seeds,
                       const std::function<CellOutcome(double, std::uint64_t)>& objective,
                       Direction direction, int jobs) {
  if (alphas.size() < 2) throw ConfigError("grid.n", "grid search needs at least two points");
  if (seeds.empty()) throw ConfigError("seeds", "grid search needs at least one seed");
  std::vector<std::vector<CellOutcome>> cells(alphas.size(), std::vector<CellOutcome>(seeds.size()));
  parallel_for(alphas.size() * seeds.size(), jobs, [&](std::size_t k) {
    const std::size_t i = k / seeds.size();
    const std::size_t j = k % seeds.size();
    cells[i][j] = objective(alphas[i], seeds[j]);
  });
  return summarize_grid(alphas, std::move(cells), direction);
}

int run_experiment(const ExperimentConfig& config, std::ostream& log) {
  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);
  {
    std::ofstream snap(config.output_dir / "config.txt", std::ios::trunc);
    if (!snap) throw Error("cannot write " + (config.output_dir / "config.txt").string());
    snap << config.raw.snapshot();
  }
  {
    std::ofstream plot(config.output_dir / "plot.py", std::ios::trunc);
    plot << plot_script(config.family);
  }
  std::ofstream run_log(config.output_dir / "run.log", std::ios::trunc);
  std::mutex log_mutex;
  auto note = [&](const std::string& msg) {
    const std::lock_guard<std::mutex> lock(log_mutex);
    run_log << '[' << timestamp() << "] " << msg << '\n';
    run_log.flush();
    log << msg << '\n';
  };
  note("family=" + std::string(to_string(config.family)) + " optimizer=" +
       std::string(to_string(config.optim.rule)) + " out=" + config.output_dir.string());

  const fs::path records_path = config.output_dir / "records.csv";
  std::ofstream records(records_path, std::ios::trunc);
  if (!records) throw Error("cannot write " + records_path.string());
  CsvWriter(records).row(header_for(config.family));

  if (config.family == Family::verify) {
    const auto checks = run_property_checks();
    bool all = true;
    CsvWriter csv(records);
    for (const auto& check : checks) {
      all = all && check.passed;
      csv.field(std::string_view(check.name))
          .field(std::string_view(check.passed ? "true" : "false"))
          .field(std::string_view(check.detail));
      csv.end_row();
      note(std::string(check.passed ? "PASS " : "FAIL ") + check.name + ": " + check.detail);
    }
    note(all ? "verify: all checks passed" : "verify: some checks failed");
    return all ? kExitOk : kExitVerify;
  }

  const RunContext ctx = prepare(config);
  const std::vector<double> alphas =
      config.grid ? logspace(config.grid->lo, config.grid->hi, config.grid->n)
                  : std::vector<double>{config.alpha};
  const auto seeds = config.seed_list();
  const std::size_t total = alphas.size() * seeds.size();

  // Cells complete in any order; rows are appended in (alpha, seed) order.
  std::vector<std::optional<CellResult>> done(total);
  std::size_t flushed = 0;
  std::mutex flush_mutex;
  parallel_for(total, config.jobs, [&](std::size_t k) {
    const double alpha = alphas[k / seeds.size()];
    const std::uint64_t seed = seeds[k % seeds.size()];
    CellResult cell = run_cell(config, ctx, alpha, seed);
    std::ostringstream msg;
    msg << "cell alpha=" << format_double(alpha) << " seed=" << seed
        << " final=" << format_double(cell.outcome.final_metric)
        << (cell.outcome.diverged ? " DIVERGED" : "");
    if (!cell.note.empty()) msg << " (" << cell.note << ")";
    note(msg.str());
    const std::lock_guard<std::mutex> lock(flush_mutex);
    done[k] = std::move(cell);
    while (flushed < total && done[flushed]) {
      records << done[flushed]->rows;
      records.flush();
      done[flushed]->rows.clear();
      ++flushed;
    }
  });

  std::vector<std::vector<CellOutcome>> outcomes(alphas.size());
  int diverged = 0;
  for (std::size_t k = 0; k < total; ++k) {
    outcomes[k / seeds.size()].push_back(done[k]->outcome);
    if (done[k]->outcome.diverged) ++diverged;
  }
  if (!config.grid) {
    if (diverged > 0) {
      note("partial failure: " + std::to_string(diverged) + " of " + std::to_string(total) +
           " runs diverged");
      return kExitDiverged;
    }
    return kExitOk;
  }

  const Direction dir = (config.family == Family::supervised || config.family == Family::lqr)
                            ? Direction::minimize
                            : Direction::maximize;
  try {
    const GridResult grid = summarize_grid(alphas, std::move(outcomes), dir);
    note("alpha,mean_final,std_final,runs,diverged");
    for (const auto& row : grid.table) {
      note(format_double(row.alpha) + "," + format_double(row.mean) + "," +
           format_double(row.stddev) + "," + std::to_string(row.runs) + "," +
           std::to_string(row.diverged));
    }
    note("best alpha = " + format_double(grid.best_alpha));
  } catch (const AllRunsDiverged& e) {
    note(e.what());
    return kExitDiverged;
  }
  return kExitOk;
}

}  // namespace ignd
