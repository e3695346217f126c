#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "flsim/data.hpp"
#include "flsim/evaluation.hpp"
#include "flsim/hyperparams.hpp"
#include "flsim/models.hpp"
#include "flsim/trainer.hpp"

namespace flsim {

struct AlgorithmDescriptor;

struct DatasetConfig {
  enum class Source { kBlobs, kCsv };

  Source source = Source::kBlobs;
  std::size_t n_samples = 1000;
  std::size_t n_features = 10;
  int n_classes = 2;
  double separation = 4.0;
  std::filesystem::path path;
  std::string label_column = "label";
  double test_fraction = 0.2;
  bool stratified = true;
};

struct EvalConfig {
  EvalSchedule schedule;
  EvalTarget scope = EvalTarget::kServer;
  bool weight_by_size = true;
};

struct LoggerConfig {
  enum class Format { kStdout, kCsv, kJson };

  Format format = Format::kStdout;
  std::filesystem::path path;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  PartitionSpec distribution;
  bool distribution_given = false;
  bool distribution_seed_given = false;
  std::size_t n_clients = 1;
  int n_rounds = 1;
  double eligibility = 1.0;
  std::uint64_t seed = 42;
  std::string device = "cpu";
  bool parallel_clients = false;
  EvalConfig eval;
  LoggerConfig logger;
  std::filesystem::path source;

  // Replaces the run seed; the partition seed follows unless set explicitly.
  void override_seed(std::uint64_t seed);
};

struct ModelConfig {
  ModelKind kind = ModelKind::kLinear;
  std::vector<std::size_t> hidden;
  Activation activation = Activation::kRelu;

  ModelArchitecture build(std::size_t n_features, int n_classes) const;
};

struct AlgorithmConfig {
  std::string name;
  ModelConfig model;
  HyperParams server;
  HyperParams client;
  std::filesystem::path source;
  // "client.lr" -> "12:7" for every hyper-parameter read from a file
  std::map<std::string, std::string> locations;

  // "<file>:<line>:<column>" for `key`, or just the file name.
  std::string where(const std::string& key) const;
};

// Errors are ConfigError with "<file>:<line>:<column>: key '<key>' ..." text.
ExperimentConfig parse_experiment_config(const std::filesystem::path& path);
AlgorithmConfig parse_algorithm_config(const std::filesystem::path& path);
ExperimentConfig parse_experiment_config_text(const std::string& text,
                                              const std::string& origin = "<string>");
AlgorithmConfig parse_algorithm_config_text(const std::string& text,
                                            const std::string& origin = "<string>");

// A document with a top-level `name:` key is an algorithm configuration.
std::variant<ExperimentConfig, AlgorithmConfig> parse_config(const std::filesystem::path& path);

// Checks hyper-parameter keys and types against the algorithm's defaults and
// returns the merged (defaults + overrides) sections.
struct ResolvedAlgorithm {
  HyperParams server;
  HyperParams client;
  OptimizerSpec optimizer;
  LocalWorkSpec work;
  bool weight_by_size = true;
};

ResolvedAlgorithm resolve_hyperparams(const AlgorithmConfig& config,
                                      const AlgorithmDescriptor& descriptor);

}  // namespace flsim
