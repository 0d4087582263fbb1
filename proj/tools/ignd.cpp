#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ignd/errors.hpp"
#include "ignd/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> seed;
  std::optional<std::string> seeds;
  std::optional<std::string> alpha;
  std::optional<std::string> epsilon;
  std::optional<std::string> optimizer;
  std::optional<std::string> steps;
  std::optional<std::string> out;
  std::optional<std::string> jobs;
  std::optional<std::string> family;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "key = value config file");
  cmd->add_option("--seed", o.seed, "first seed");
  cmd->add_option("--seeds", o.seeds, "number of consecutive seeds");
  cmd->add_option("--alpha", o.alpha, "learning rate (start of the schedule for lqr)");
  cmd->add_option("--epsilon", o.epsilon, "Levenberg-Marquardt term");
  cmd->add_option("--optimizer", o.optimizer, "sgd|ignd|cgd|ngd|adam|ignd_adam");
  cmd->add_option("--steps", o.steps, "training or evaluation steps");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--jobs", o.jobs, "concurrent (alpha, seed) cells");
  cmd->add_option("--set", o.sets, "extra key=value override, repeatable");
}

ignd::ConfigMap build_config(const Overrides& o, const std::string& family, bool grid) {
  ignd::ConfigMap m = o.config.empty() ? ignd::ConfigMap() : ignd::ConfigMap::load(o.config);
  if (!family.empty()) m.set("family", family);
  if (o.family) m.set("family", *o.family);
  const std::pair<const char*, const std::optional<std::string>*> flags[] = {
      {"seed", &o.seed},   {"seeds", &o.seeds},         {"alpha", &o.alpha},
      {"epsilon", &o.epsilon}, {"optimizer", &o.optimizer}, {"steps", &o.steps},
      {"output_dir", &o.out},  {"jobs", &o.jobs},
  };
  for (const auto& [key, value] : flags) {
    if (*value) m.set(key, **value);
  }
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ignd::ConfigError("--set", "expected key=value, got '" + kv + "'");
    m.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (grid && m.get("grid.n") == "0") m.set("grid.n", "10");
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental Gauss-Newton descent experiments"};
  app.require_subcommand(1);
  Overrides o;
  std::string family;
  bool grid = false;

  for (const char* name : {"supervised", "frozenlake", "cartpole", "lqr"}) {
    CLI::App* cmd = app.add_subcommand(name, std::string("run the ") + name + " experiment");
    add_common(cmd, o);
    cmd->callback([&family, name] { family = name; });
  }
  CLI::App* gs = app.add_subcommand("gridsearch", "log-uniform learning-rate grid search");
  add_common(gs, o);
  gs->add_option("--family", o.family, "supervised|frozenlake|cartpole|lqr");
  gs->callback([&grid] { grid = true; });
  CLI::App* verify = app.add_subcommand("verify", "oracle and property suites");
  add_common(verify, o);
  verify->callback([&family] { family = "verify"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ignd::kExitOk : ignd::kExitConfig;
  }

  try {
    const ignd::ExperimentConfig config = ignd::resolve_config(build_config(o, family, grid));
    if (grid && !config.grid) throw ignd::ConfigError("grid.n", "grid search needs grid.n >= 2");
    if (grid && config.family == ignd::Family::verify) {
      throw ignd::ConfigError("family", "grid search needs a training family");
    }
    return ignd::run_experiment(config, std::cout);
  } catch (const ignd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return ignd::kExitConfig;
  } catch (const ignd::Diverged& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return ignd::kExitDiverged;
  } catch (const ignd::AllRunsDiverged& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return ignd::kExitDiverged;
  } catch (const ignd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ignd::kExitConfig;
  }
}
