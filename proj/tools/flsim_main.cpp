#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "flsim/algorithms.hpp"
#include "flsim/config.hpp"
#include "flsim/error.hpp"
#include "flsim/runner.hpp"
#include "flsim/templates.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct RunArgs {
  std::string exp_path;
  std::string type;
  std::string alg_path;
  std::string plugins;
  std::string log_path;
  std::optional<std::uint64_t> seed;
};

int run(const RunArgs& args) {
  using namespace flsim;
  const ExperimentType type = parse_experiment_type(args.type);
  ExperimentConfig exp = parse_experiment_config(args.exp_path);
  const AlgorithmConfig alg = parse_algorithm_config(args.alg_path);
  if (args.seed) exp.override_seed(*args.seed);
  if (!args.log_path.empty()) {
    exp.logger.path = args.log_path;
    exp.logger.format = exp.logger.path.extension() == ".json" ? LoggerConfig::Format::kJson
                                                               : LoggerConfig::Format::kCsv;
  }
  if (exp.logger.format != LoggerConfig::Format::kStdout && exp.logger.path.empty()) {
    throw ConfigError(args.exp_path + ": key 'logger.path': required for csv and json output");
  }

  auto registry = AlgorithmRegistry::with_builtins();
  if (!args.plugins.empty()) registry->set_plugin_dir(args.plugins);
  const RunOutcome outcome = run_experiment(type, exp, alg, *registry);
  emit_round_log(exp.logger, outcome.rows, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flsim: deterministic federated learning simulator"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "run an experiment");
  run_cmd->add_option("--config", run_args.exp_path, "experiment configuration")->required();
  run_cmd->add_option("type", run_args.type, "federation, centralized or clients-only")
      ->required();
  run_cmd->add_option("algorithm", run_args.alg_path, "algorithm configuration")->required();
  run_cmd->add_option("--plugins", run_args.plugins, "directory searched for plug-in algorithms");
  run_cmd->add_option("--log", run_args.log_path, "round log file (.csv or .json)");
  run_cmd->add_option("--seed", run_args.seed, "override the experiment seed");

  auto* get_cmd = app.add_subcommand("get", "configuration templates");
  get_cmd->require_subcommand(1);
  std::string template_name;
  bool force = false;
  auto* get_config = get_cmd->add_subcommand("config", "write ./config/<NAME>.yaml");
  get_config->add_option("name", template_name, "template name")->required();
  get_config->add_flag("--force", force, "overwrite an existing file");
  auto* get_list = get_cmd->add_subcommand("list", "list bundled templates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return run(run_args);
    if (*get_list) {
      for (const auto& name : flsim::list_templates()) std::cout << name << '\n';
      return 0;
    }
    if (*get_config) {
      const auto path = flsim::write_template(template_name, "config", force);
      std::cout << "wrote " << path.string() << '\n';
      return 0;
    }
  } catch (const flsim::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const flsim::RegistryError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
