// Command-line front end: train, generate, sweep, bound-table, evaluate.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "croco/cli.hpp"
#include "croco/error.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o, bool config_required) {
  auto* opt = cmd->add_option("--config", o.config, "JSON run configuration");
  if (config_required) opt->required();
  cmd->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "base seed (overrides the config)");
  cmd->add_option("--out", o.out, "output directory");
}

croco::RunConfig resolve(const Overrides& o) {
  auto config = croco::load_run_config(o.config);
  if (o.jobs) config.jobs = *o.jobs;
  if (o.seed) {
    config.seed = *o.seed;
    if (config.train) config.train->seed = *o.seed;
    if (config.synthetic) config.synthetic->seed = *o.seed;
  }
  if (o.out) config.out = *o.out;
  return config;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("croco");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("CROCO_LOG")) {
    const auto parsed = spdlog::level::from_str(level);
    // from_str maps unknown names to off; only honour names it really knows.
    if (parsed != spdlog::level::off || std::string(level) == "off") {
      spdlog::set_level(parsed);
    } else {
      spdlog::warn("ignoring unknown CROCO_LOG level '{}'", level);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Robust counterfactual generation for MLP classifiers"};
  app.require_subcommand(1);

  Overrides o;
  auto* train = app.add_subcommand("train", "train a classifier and save its weights");
  add_common(train, o, true);

  std::optional<std::size_t> instance;
  auto* generate = app.add_subcommand("generate", "generate counterfactuals");
  add_common(generate, o, true);
  generate->add_option("--instance", instance, "test-set row to explain");

  auto* sweep = app.add_subcommand("sweep", "run the method x noise x target sweep");
  add_common(sweep, o, true);

  std::vector<double> tightness{0.02, 0.05, 0.1, 0.2};
  std::vector<double> levels{0.9, 0.99, 0.999, 0.9999};
  auto* bound_table = app.add_subcommand("bound-table", "samples needed per (m, confidence)");
  add_common(bound_table, o, false);
  bound_table->add_option("--m", tightness, "tightness values")->delimiter(',');
  bound_table->add_option("--confidence", levels, "confidence levels")->delimiter(',');

  std::string input;
  auto* evaluate = app.add_subcommand("evaluate", "re-score a counterfactuals.json file");
  add_common(evaluate, o, true);
  evaluate->add_option("--input", input, "counterfactuals.json to score")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) {
      const auto summary = croco::cmd_train(resolve(o));
      std::cout << "weights: " << summary.weights.string() << "\ntrain accuracy: "
                << summary.train_accuracy << "\ntest accuracy: " << summary.test_accuracy << '\n';
    } else if (generate->parsed()) {
      std::cout << croco::cmd_generate(resolve(o), instance).string() << '\n';
    } else if (sweep->parsed()) {
      const auto config = resolve(o);
      const auto records = croco::cmd_sweep(config);
      std::cout << records.size() << " records written to " << config.out.string() << '\n';
    } else if (bound_table->parsed()) {
      for (const double c : levels) {
        if (!(c > 0.0 && c < 1.0)) {
          throw croco::ConfigError("cli", "--confidence", "levels must lie in (0, 1)");
        }
      }
      for (const double m : tightness) {
        if (!(m > 0.0)) throw croco::ConfigError("cli", "--m", "values must be > 0");
      }
      if (o.out) {
        std::filesystem::create_directories(*o.out);
        std::ofstream file(std::filesystem::path(*o.out) / "bound_table.csv");
        croco::cmd_bound_table(tightness, levels, file);
      } else {
        croco::cmd_bound_table(tightness, levels, std::cout);
      }
    } else if (evaluate->parsed()) {
      std::cout << croco::cmd_evaluate(resolve(o), input).string() << '\n';
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return croco::exit_code_for(e);
  }
  return 0;
}
