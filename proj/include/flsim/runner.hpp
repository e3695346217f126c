#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "flsim/algorithms.hpp"
#include "flsim/config.hpp"
#include "flsim/protocol.hpp"

namespace flsim {

enum class ExperimentType { kFederation, kCentralized, kClientsOnly };

ExperimentType parse_experiment_type(const std::string& name);
std::string to_string(ExperimentType type);

struct RunOptions {
  // Called with (round or epoch index, model) after every aggregation
  // (federation) or every training unit (centralized).
  std::function<void(int, const ModelParams&)> observer;
};

struct RunOutcome {
  std::vector<RoundLogRow> rows;
  TrafficLog traffic;
  std::vector<std::vector<std::size_t>> selections;
  ModelParams final_model;
};

// Data shared by the three experiment types: dataset, train/test split,
// client partition and per-client test slices.
struct PreparedData {
  Dataset train;
  Dataset test;
  Partition partition;
  std::vector<std::vector<std::size_t>> client_test;  // indices into `test`

  DataView client_train_view(std::size_t client) const;
  DataView client_test_view(std::size_t client) const;
};

PreparedData prepare_data(const ExperimentConfig& exp, bool partition_clients = true);

RunOutcome run_federation(const ExperimentConfig& exp, const AlgorithmConfig& alg,
                          AlgorithmRegistry& registry, const RunOptions& options = {});
// One model on the whole training set for n_rounds x (client work per round)
// units; the distribution section is ignored.
RunOutcome run_centralized(const ExperimentConfig& exp, const AlgorithmConfig& alg,
                           AlgorithmRegistry& registry, const RunOptions& options = {});
// Every client trains alone for ceil(n_rounds x eligibility x work per round)
// units; nothing crosses a channel.
RunOutcome run_clients_only(const ExperimentConfig& exp, const AlgorithmConfig& alg,
                            AlgorithmRegistry& registry, const RunOptions& options = {});

RunOutcome run_experiment(ExperimentType type, const ExperimentConfig& exp,
                          const AlgorithmConfig& alg, AlgorithmRegistry& registry,
                          const RunOptions& options = {});

std::size_t clients_only_units(int rounds, double eligibility, std::size_t units_per_round);

// Round-log serialization. Columns: round, accuracy, precision_micro,
// precision_macro, recall_micro, recall_macro, f1_micro, f1_macro,
// bytes_down, bytes_up.
extern const std::vector<std::string> kRoundLogColumns;

void write_round_log_csv(std::ostream& out, const std::vector<RoundLogRow>& rows);
void write_round_log_json(std::ostream& out, const std::vector<RoundLogRow>& rows);

// Writes the rows according to `logger`. Rows of a second evaluation scope
// (eval.scope: both) go to a sibling file "<stem>.clients<ext>", or to a
// second block on stdout.
void emit_round_log(const LoggerConfig& logger, const std::vector<RoundLogRow>& rows,
                    std::ostream& stdout_stream);

}  // namespace flsim
