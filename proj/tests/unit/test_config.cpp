#include <algorithm>
#include <string>

#include "doctest.h"
#include "flsim/algorithms.hpp"
#include "flsim/config.hpp"
#include "flsim/error.hpp"
#include "flsim/templates.hpp"
#include "support/cli.hpp"

using namespace flsim;
using testing::fresh_dir;
using testing::run_cli;
using testing::write_file;

namespace {

const char* kMinimal = R"(dataset:
  source: blobs
n_clients: 4
n_rounds: 3
)";

std::string error_of(const std::string& text) {
  try {
    parse_experiment_config_text(text, "exp.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string alg_error(const std::string& text) {
  auto registry = AlgorithmRegistry::with_builtins();
  try {
    auto cfg = parse_algorithm_config_text(text, "alg.yaml");
    resolve_hyperparams(cfg, registry->resolve(cfg.name));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal experiment file gets the documented defaults") {
  const auto cfg = parse_experiment_config_text(kMinimal);
  CHECK(cfg.dataset.source == DatasetConfig::Source::kBlobs);
  CHECK(cfg.n_clients == 4);
  CHECK(cfg.n_rounds == 3);
  CHECK(cfg.eligibility == 1.0);
  CHECK(cfg.seed == 42);
  CHECK(cfg.eval.schedule.frequency == 1);
  CHECK(cfg.eval.scope == EvalTarget::kServer);
  CHECK(cfg.logger.format == LoggerConfig::Format::kStdout);
  CHECK(cfg.distribution.strategy == PartitionStrategy::kIid);
  CHECK(cfg.distribution.seed == 42);
  CHECK_FALSE(cfg.distribution_given);
}

TEST_CASE("full experiment file") {
  const auto cfg = parse_experiment_config_text(R"(dataset:
  source: csv
  path: data.csv
  label_column: y
  test_fraction: 0.3
  stratified: false
distribution:
  strategy: label_quantity
  k: 3
  seed: 7
n_clients: 10
n_rounds: 20
eligibility: 0.25
seed: 5
device: cuda
parallel_clients: true
eval:
  frequency: 4
  scope: both
  weighting: uniform
logger:
  format: json
  path: out/log.json
)");
  CHECK(cfg.dataset.source == DatasetConfig::Source::kCsv);
  CHECK(cfg.dataset.label_column == "y");
  CHECK(cfg.dataset.test_fraction == 0.3);
  CHECK_FALSE(cfg.dataset.stratified);
  CHECK(cfg.distribution.strategy == PartitionStrategy::kLabelQuantity);
  CHECK(cfg.distribution.k == 3);
  CHECK(cfg.distribution.seed == 7);
  CHECK(cfg.eligibility == 0.25);
  CHECK(cfg.device == "cuda");
  CHECK(cfg.parallel_clients);
  CHECK(cfg.eval.schedule.frequency == 4);
  CHECK(cfg.eval.scope == EvalTarget::kBoth);
  CHECK_FALSE(cfg.eval.weight_by_size);
  CHECK(cfg.logger.format == LoggerConfig::Format::kJson);
  CHECK(cfg.logger.path == "out/log.json");
}

TEST_CASE("seed override carries to the partition unless it has its own seed") {
  auto cfg = parse_experiment_config_text(kMinimal);
  cfg.override_seed(9);
  CHECK(cfg.seed == 9);
  CHECK(cfg.distribution.seed == 9);
  auto pinned = parse_experiment_config_text(std::string(kMinimal) + "distribution:\n  seed: 3\n");
  pinned.override_seed(9);
  CHECK(pinned.distribution.seed == 3);
}

TEST_CASE("experiment errors name the key and location") {
  const std::string base = kMinimal;
  auto err = error_of(base + "eligibility: 1.5\n");
  CHECK(err.find("exp.yaml:5:") != std::string::npos);
  CHECK(err.find("'eligibility'") != std::string::npos);
  CHECK(err.find("(0,1]") != std::string::npos);

  CHECK(error_of(base + "eligibilty: 0.5\n").find("'eligibilty': unknown key") != std::string::npos);
  CHECK(error_of(base + "n_rounds_typo: 1\n").find("n_rounds_typo") != std::string::npos);
  CHECK(error_of("dataset:\n  source: blobs\n  n_samples: many\nn_clients: 2\nn_rounds: 1\n")
            .find("'dataset.n_samples'") != std::string::npos);
  CHECK(error_of("dataset:\n  source: parquet\nn_clients: 2\nn_rounds: 1\n")
            .find("'dataset.source'") != std::string::npos);
  CHECK(error_of("dataset:\n  source: blobs\nn_rounds: 1\n").find("'n_clients'") != std::string::npos);
  CHECK(error_of(base + "distribution:\n  strategy: dirichlet_label\n  alpha: -1\n")
            .find("'distribution.alpha'") != std::string::npos);
  CHECK(error_of(base + "distribution:\n  strategy: nope\n").find("'distribution.strategy'") !=
        std::string::npos);
  CHECK(error_of(base + "eval:\n  frequency: 0\n").find("'eval.frequency'") != std::string::npos);
  CHECK(error_of(base + "eval:\n  scope: everywhere\n").find("'eval.scope'") != std::string::npos);
  CHECK(error_of(base + "logger:\n  format: xml\n").find("'logger.format'") != std::string::npos);
  CHECK(error_of("dataset:\n  source: blobs\nn_clients: 0\nn_rounds: 1\n").find("'n_clients'") !=
        std::string::npos);
  CHECK(error_of(base + "n_clients: 5\n").find("'n_clients': duplicate key") != std::string::npos);
  CHECK(error_of("dataset: [1, 2\n").find("malformed YAML") != std::string::npos);
  CHECK_THROWS_AS(parse_experiment_config("/nonexistent/exp.yaml"), ConfigError);
}

TEST_CASE("algorithm files") {
  const auto cfg = parse_algorithm_config_text(R"(name: fedprox
model:
  kind: mlp
  hidden: [16, 8]
  activation: tanh
server:
  weighting: uniform
client:
  lr: 0.05
  momentum: 0.9
  batch_size: 16
  local_steps: 5
  mu: 0.1
)");
  CHECK(cfg.name == "fedprox");
  CHECK(cfg.model.kind == ModelKind::kMlp);
  CHECK(cfg.model.hidden == std::vector<std::size_t>{16, 8});
  CHECK(cfg.model.activation == Activation::kTanh);
  const auto arch = cfg.model.build(5, 3);
  CHECK(arch.layer_sizes == std::vector<std::size_t>{5, 16, 8, 3});

  auto registry = AlgorithmRegistry::with_builtins();
  const auto r = resolve_hyperparams(cfg, registry->resolve("fedprox"));
  CHECK(r.optimizer.learning_rate == 0.05);
  CHECK(r.optimizer.momentum == 0.9);
  CHECK(r.work.mode == LocalWorkSpec::Mode::kSteps);
  CHECK(r.work.amount == 5);
  CHECK(r.work.batch_size == 16);
  CHECK_FALSE(r.weight_by_size);
  CHECK(r.client.number("mu") == 0.1);

  const auto defaults = resolve_hyperparams(parse_algorithm_config_text("name: fedavg\n"),
                                            registry->resolve("fedavg"));
  CHECK(defaults.work.mode == LocalWorkSpec::Mode::kEpochs);
  CHECK(defaults.work.amount == 1);
  CHECK(defaults.work.batch_size == 32);
  CHECK(defaults.optimizer.learning_rate == 0.1);
  CHECK(defaults.weight_by_size);
}

TEST_CASE("algorithm errors name the key") {
  CHECK(alg_error("name: fedavg\nclient:\n  mu: 0.1\n").find("'client.mu'") != std::string::npos);
  CHECK(alg_error("name: fedavg\nclient:\n  lr: fast\n").find("'client.lr'") != std::string::npos);
  CHECK(alg_error("name: fedavg\nclient:\n  batch_size: 2.5\n").find("'client.batch_size'") !=
        std::string::npos);
  CHECK(alg_error("name: fedavg\nclient:\n  local_steps: 2\n  local_epochs: 1\n")
            .find("'client.local_steps'") != std::string::npos);
  CHECK(alg_error("name: fedavg\nclient:\n  momentum: 1.0\n").find("'client.momentum'") !=
        std::string::npos);
  CHECK(alg_error("name: fedavg\nserver:\n  weighting: median\n").find("'server.weighting'") !=
        std::string::npos);
  CHECK(alg_error("name: fedavg\noptimiser: sgd\n").find("'optimiser'") != std::string::npos);
  CHECK(alg_error("name: fedavg\nmodel:\n  kind: mlp\n").find("'model.hidden'") != std::string::npos);
  CHECK(alg_error("name: fedavg\nmodel:\n  kind: linear\n  hidden: [4]\n").find("'model.hidden'") !=
        std::string::npos);
  CHECK(alg_error("model:\n  kind: linear\n").find("'name'") != std::string::npos);
  CHECK(alg_error("name: fedavg\nclient:\n  lr: fast\n").find("alg.yaml:3:7:") !=
        std::string::npos);
  CHECK(alg_error("name: fedavg\nclient:\n  batch_size: 32\n  local_steps: 0\n")
            .find("alg.yaml:4:16: key 'client.local_steps'") != std::string::npos);
  CHECK(alg_error("name: fedprox\nclient:\n  mu: -1\n").find("alg.yaml:3:7: key 'client.mu'") !=
        std::string::npos);
  CHECK(alg_error("name: fedopt\nserver:\n  beta: 1.0\n").find("'server.beta'") !=
        std::string::npos);
  CHECK(alg_error("name: fedopt\nserver:\n  lr: 0\n").find("'server.lr'") != std::string::npos);
  CHECK(alg_error("name: fedopt\nserver:\n  optimizer: sgd\n").find("'server.optimizer'") !=
        std::string::npos);
}

TEST_CASE("parse_config tells the two documents apart") {
  const auto dir = fresh_dir("parse_config");
  write_file(dir / "exp.yaml", kMinimal);
  write_file(dir / "alg.yaml", "name: scaffold\n");
  CHECK(std::holds_alternative<ExperimentConfig>(parse_config(dir / "exp.yaml")));
  const auto alg = parse_config(dir / "alg.yaml");
  REQUIRE(std::holds_alternative<AlgorithmConfig>(alg));
  CHECK(std::get<AlgorithmConfig>(alg).name == "scaffold");
}

TEST_CASE("bundled templates") {
  auto names = list_templates();
  for (const char* n : {"exp", "fedavg", "fedprox", "scaffold", "fedopt"}) {
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
  }
  CHECK_THROWS_WITH_AS(template_text("fedsgd"), doctest::Contains("fedopt"), ConfigError);

  const auto dir = fresh_dir("templates");
  const auto path = write_template("exp", dir / "config", false);
  CHECK(path == dir / "config" / "exp.yaml");
  CHECK(std::filesystem::exists(path));
  CHECK_THROWS_WITH_AS(write_template("exp", dir / "config", false), doctest::Contains("overwrite"),
                       ConfigError);
  CHECK_NOTHROW(write_template("exp", dir / "config", true));

  // every template parses and resolves
  auto registry = AlgorithmRegistry::with_builtins();
  CHECK_NOTHROW(parse_experiment_config_text(template_text("exp")));
  for (const char* n : {"fedavg", "fedprox", "scaffold", "fedopt"}) {
    CAPTURE(n);
    const auto cfg = parse_algorithm_config_text(template_text(n));
    CHECK_NOTHROW(resolve_hyperparams(cfg, registry->resolve(cfg.name)));
  }
}

TEST_CASE("cli: get list and get config") {
  const auto dir = fresh_dir("cli_get");
  auto list = run_cli(dir, "get list");
  CHECK(list.exit_code == 0);
  CHECK(list.out.find("scaffold") != std::string::npos);

  CHECK(run_cli(dir, "get config fedavg").exit_code == 0);
  CHECK(std::filesystem::exists(dir / "config" / "fedavg.yaml"));
  auto again = run_cli(dir, "get config fedavg");
  CHECK(again.exit_code == 2);
  CHECK(again.err.find("overwrite") != std::string::npos);
  CHECK(run_cli(dir, "get config fedavg --force").exit_code == 0);
  auto unknown = run_cli(dir, "get config nothing");
  CHECK(unknown.exit_code == 2);
  CHECK(unknown.err.find("exp") != std::string::npos);
}

TEST_CASE("cli: run exit codes") {
  const auto dir = fresh_dir("cli_run");
  run_cli(dir, "get config exp");
  run_cli(dir, "get config fedavg");
  write_file(dir / "small.yaml", R"(dataset:
  source: blobs
  n_samples: 200
  n_features: 4
n_clients: 3
n_rounds: 2
seed: 1
)");
  auto ok = run_cli(dir, "run --config=small.yaml federation config/fedavg.yaml");
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.rfind("round,accuracy,", 0) == 0);

  write_file(dir / "bad.yaml", "dataset:\n  source: blobs\nn_clients: 3\nn_rounds: 2\nelig: 1\n");
  auto bad = run_cli(dir, "run --config=bad.yaml federation config/fedavg.yaml");
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("'elig'") != std::string::npos);

  CHECK(run_cli(dir, "run --config=small.yaml federated config/fedavg.yaml").exit_code == 2);
  CHECK(run_cli(dir, "run --config=missing.yaml federation config/fedavg.yaml").exit_code == 2);
  CHECK(run_cli(dir, "run federation config/fedavg.yaml").exit_code == 2);
  write_file(dir / "unknown_alg.yaml", "name: fedsgd\n");
  auto unknown = run_cli(dir, "run --config=small.yaml federation unknown_alg.yaml");
  CHECK(unknown.exit_code == 2);
  CHECK(unknown.err.find("fedavg") != std::string::npos);

  // a valid config that cannot be carried out is a runtime error
  write_file(dir / "infeasible.yaml", R"(dataset:
  source: blobs
  n_samples: 20
distribution:
  strategy: dirichlet_label
  alpha: 0.01
n_clients: 15
n_rounds: 1
)");
  auto infeasible = run_cli(dir, "run --config=infeasible.yaml federation config/fedavg.yaml");
  CHECK(infeasible.exit_code == 3);
  CHECK_FALSE(infeasible.err.empty());
}

TEST_CASE("cli: plug-in algorithms via --plugins") {
  const auto dir = fresh_dir("cli_plugin");
  write_file(dir / "exp.yaml", "dataset:\n  source: blobs\n  n_samples: 200\nn_clients: 3\nn_rounds: 2\n");
  write_file(dir / "alg.yaml", "name: my_plugin.MyAlg\nclient:\n  lr: 0.05\n");
  CHECK(run_cli(dir, "run --config=exp.yaml federation alg.yaml").exit_code == 2);
  auto ok = run_cli(dir, std::string("run --config=exp.yaml federation alg.yaml --plugins '") +
                             FLSIM_PLUGIN_DIR + "'");
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("round,") == 0);
}
