#include "flsim/runner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include "flsim/error.hpp"
#include "flsim/log.hpp"
#include "json.hpp"

namespace flsim {

ExperimentType parse_experiment_type(const std::string& name) {
  if (name == "federation") return ExperimentType::kFederation;
  if (name == "centralized") return ExperimentType::kCentralized;
  if (name == "clients-only") return ExperimentType::kClientsOnly;
  throw ConfigError("unknown experiment type '" + name +
                    "' (expected federation, centralized or clients-only)");
}

std::string to_string(ExperimentType type) {
  switch (type) {
    case ExperimentType::kFederation: return "federation";
    case ExperimentType::kCentralized: return "centralized";
    case ExperimentType::kClientsOnly: return "clients-only";
  }
  return "federation";
}

DataView PreparedData::client_train_view(std::size_t client) const {
  std::vector<double> offset;
  if (partition.has_offsets()) offset = partition.feature_offsets[client];
  return DataView(&train, partition.assignment[client], std::move(offset));
}

DataView PreparedData::client_test_view(std::size_t client) const {
  std::vector<double> offset;
  if (partition.has_offsets()) offset = partition.feature_offsets[client];
  return DataView(&test, client_test[client], std::move(offset));
}

namespace {

Dataset load_dataset(const ExperimentConfig& exp) {
  const auto& d = exp.dataset;
  if (d.source == DatasetConfig::Source::kBlobs) {
    return generate_blobs(d.n_samples, d.n_features, d.n_classes, d.separation, exp.seed);
  }
  std::filesystem::path path = d.path;
  if (path.is_relative() && exp.source.has_parent_path()) {
    auto sibling = exp.source.parent_path() / path;
    if (std::filesystem::exists(sibling)) path = sibling;
  }
  return load_csv(path, d.label_column);
}

std::vector<std::vector<std::size_t>> split_test_slices(std::size_t test_size,
                                                         std::size_t n_clients,
                                                         std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "data/client-test");
  auto order = rng.permutation(test_size);
  std::vector<std::vector<std::size_t>> slices(n_clients);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < n_clients; ++c) {
    const std::size_t count = test_size / n_clients + (c < test_size % n_clients ? 1 : 0);
    slices[c].assign(order.begin() + static_cast<std::ptrdiff_t>(offset),
                     order.begin() + static_cast<std::ptrdiff_t>(offset + count));
    std::sort(slices[c].begin(), slices[c].end());
    offset += count;
  }
  return slices;
}

DataView whole_view(const Dataset& dataset) {
  std::vector<std::size_t> all(dataset.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return DataView(&dataset, std::move(all));
}

void notice_device(const ExperimentConfig& exp) {
  if (exp.device != "cpu") {
    warn("device '" + exp.device + "' is accepted for compatibility and ignored; running on cpu");
  }
}

RoundLogRow make_row(const MetricsReport& report) {
  return RoundLogRow{report.round, report.scope, report.metrics, report.n_samples, 0, 0};
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& exp, bool partition_clients) {
  PreparedData out;
  Dataset full = load_dataset(exp);
  full.validate();
  auto split = train_test_split_indices(full, exp.dataset.test_fraction, exp.dataset.stratified,
                                        exp.seed);
  out.train = full.subset(split.train);
  out.test = full.subset(split.test);
  if (partition_clients) {
    out.partition = partition(out.train, exp.n_clients, exp.distribution);
    out.client_test = split_test_slices(out.test.size(), exp.n_clients, exp.seed);
  }
  return out;
}

RunOutcome run_federation(const ExperimentConfig& exp, const AlgorithmConfig& alg,
                          AlgorithmRegistry& registry, const RunOptions& options) {
  const AlgorithmDescriptor& descriptor = registry.resolve(alg.name);
  const ResolvedAlgorithm resolved = resolve_hyperparams(alg, descriptor);
  notice_device(exp);

  const PreparedData data = prepare_data(exp);
  const ModelArchitecture arch = alg.model.build(data.train.n_features(), data.train.n_classes);

  Channel channel;
  std::vector<std::unique_ptr<Client>> clients;
  clients.reserve(exp.n_clients);
  for (std::size_t i = 0; i < exp.n_clients; ++i) {
    ClientSetup setup;
    setup.index = static_cast<std::uint32_t>(i);
    setup.channel = &channel;
    setup.train = data.client_train_view(i);
    setup.test = data.client_test_view(i);
    setup.arch = arch;
    setup.optimizer = resolved.optimizer;
    setup.work = resolved.work;
    setup.rng = Rng::stream(exp.seed, "client/" + std::to_string(i));
    setup.hyperparams = resolved.client;
    clients.push_back(descriptor.make_client(std::move(setup)));
  }

  ServerSetup setup;
  setup.channel = &channel;
  setup.clients = std::move(clients);
  setup.initial_model = init_params(arch, derive_seed(exp.seed, "model/init"));
  setup.arch = arch;
  setup.eligibility = exp.eligibility;
  setup.selection_rng = Rng::stream(exp.seed, "server/selection");
  setup.hyperparams = resolved.server;
  setup.weight_by_size = resolved.weight_by_size;
  setup.parallel_clients = exp.parallel_clients;
  setup.evaluation.schedule = exp.eval.schedule;
  setup.evaluation.target = exp.eval.scope;
  setup.evaluation.server_test = whole_view(data.test);
  setup.evaluation.client_weight_by_size = exp.eval.weight_by_size;
  auto server = descriptor.make_server(std::move(setup));
  if (options.observer) server->set_round_observer(options.observer);

  FederationResult result = server->fit(exp.n_rounds);
  return RunOutcome{std::move(result.rows), std::move(result.traffic),
                    std::move(result.selections), std::move(result.final_model)};
}

RunOutcome run_centralized(const ExperimentConfig& exp, const AlgorithmConfig& alg,
                           AlgorithmRegistry& registry, const RunOptions& options) {
  const AlgorithmDescriptor& descriptor = registry.resolve(alg.name);
  const ResolvedAlgorithm resolved = resolve_hyperparams(alg, descriptor);
  notice_device(exp);
  if (exp.distribution_given) {
    warn("centralized run: the distribution section is ignored");
  }

  const PreparedData data = prepare_data(exp, false);
  const ModelArchitecture arch = alg.model.build(data.train.n_features(), data.train.n_classes);
  const DataView train = whole_view(data.train);
  const DataView test = whole_view(data.test);

  // Same stream as client 0 of a federation, so a one-client federation
  // follows the identical batch schedule.
  LocalTrainer trainer(arch, resolved.optimizer, resolved.work, Rng::stream(exp.seed, "client/0"));
  const LocalWorkSpec unit{resolved.work.mode, 1, resolved.work.batch_size};
  const int units = exp.n_rounds * static_cast<int>(resolved.work.amount);

  RunOutcome out;
  ModelParams params = init_params(arch, derive_seed(exp.seed, "model/init"));
  const auto& schedule = exp.eval.schedule;
  for (int u = 1; u <= units; ++u) {
    trainer.fit(params, train, unit);
    if (options.observer) options.observer(u, params);
    if (u < units && schedule.due(u, units)) {
      out.rows.push_back(make_row(evaluate_model(arch, params, test, u, EvalScope::kServerGlobal)));
    }
  }
  out.rows.push_back(make_row(evaluate_model(arch, params, test, units, EvalScope::kServerGlobal)));
  out.final_model = std::move(params);
  return out;
}

std::size_t clients_only_units(int rounds, double eligibility, std::size_t units_per_round) {
  const double expected = static_cast<double>(rounds) * eligibility *
                          static_cast<double>(units_per_round);
  // guard against 20.000000000000004-style products
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(expected - 1e-9)));
}

RunOutcome run_clients_only(const ExperimentConfig& exp, const AlgorithmConfig& alg,
                            AlgorithmRegistry& registry, const RunOptions& options) {
  const AlgorithmDescriptor& descriptor = registry.resolve(alg.name);
  const ResolvedAlgorithm resolved = resolve_hyperparams(alg, descriptor);
  notice_device(exp);

  const PreparedData data = prepare_data(exp);
  const ModelArchitecture arch = alg.model.build(data.train.n_features(), data.train.n_classes);
  const ModelParams initial = init_params(arch, derive_seed(exp.seed, "model/init"));
  const LocalWorkSpec unit{resolved.work.mode, 1, resolved.work.batch_size};
  const auto units = static_cast<int>(
      clients_only_units(exp.n_rounds, exp.eligibility, resolved.work.amount));

  std::vector<LocalTrainer> trainers;
  std::vector<ModelParams> models(exp.n_clients, initial);
  std::vector<DataView> train_views, test_views;
  for (std::size_t i = 0; i < exp.n_clients; ++i) {
    trainers.emplace_back(arch, resolved.optimizer, resolved.work,
                          Rng::stream(exp.seed, "client/" + std::to_string(i)));
    train_views.push_back(data.client_train_view(i));
    test_views.push_back(data.client_test_view(i));
  }

  RunOutcome out;
  auto evaluate_all = [&](int u) {
    std::vector<MetricsReport> reports;
    for (std::size_t i = 0; i < exp.n_clients; ++i) {
      if (test_views[i].empty()) continue;
      reports.push_back(evaluate_model(arch, models[i], test_views[i], u, EvalScope::kClientMean));
    }
    if (!reports.empty()) {
      out.rows.push_back(make_row(combine_client_reports(reports, u, exp.eval.weight_by_size)));
    }
  };
  const auto& schedule = exp.eval.schedule;
  for (int u = 1; u <= units; ++u) {
    for (std::size_t i = 0; i < exp.n_clients; ++i) trainers[i].fit(models[i], train_views[i], unit);
    if (options.observer && exp.n_clients == 1) options.observer(u, models[0]);
    if (u < units && schedule.due(u, units)) evaluate_all(u);
  }
  evaluate_all(units);
  out.final_model = exp.n_clients == 1 ? models[0] : ModelParams();
  return out;
}

RunOutcome run_experiment(ExperimentType type, const ExperimentConfig& exp,
                          const AlgorithmConfig& alg, AlgorithmRegistry& registry,
                          const RunOptions& options) {
  switch (type) {
    case ExperimentType::kFederation: return run_federation(exp, alg, registry, options);
    case ExperimentType::kCentralized: return run_centralized(exp, alg, registry, options);
    case ExperimentType::kClientsOnly: return run_clients_only(exp, alg, registry, options);
  }
  throw ConfigError("unknown experiment type");
}

const std::vector<std::string> kRoundLogColumns{
    "round",        "accuracy",  "precision_micro", "precision_macro", "recall_micro",
    "recall_macro", "f1_micro",  "f1_macro",        "bytes_down",      "bytes_up",
};

namespace {

std::string format_number(double value) {
  char buffer[64];
  auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

}  // namespace

void write_round_log_csv(std::ostream& out, const std::vector<RoundLogRow>& rows) {
  for (std::size_t i = 0; i < kRoundLogColumns.size(); ++i) {
    out << (i ? "," : "") << kRoundLogColumns[i];
  }
  out << '\n';
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << r.round;
    for (double v : {m.accuracy, m.precision_micro, m.precision_macro, m.recall_micro,
                     m.recall_macro, m.f1_micro, m.f1_macro}) {
      out << ',' << format_number(v);
    }
    out << ',' << r.bytes_down << ',' << r.bytes_up << '\n';
  }
}

void write_round_log_json(std::ostream& out, const std::vector<RoundLogRow>& rows) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["round"] = r.round;
    row["accuracy"] = r.metrics.accuracy;
    row["precision_micro"] = r.metrics.precision_micro;
    row["precision_macro"] = r.metrics.precision_macro;
    row["recall_micro"] = r.metrics.recall_micro;
    row["recall_macro"] = r.metrics.recall_macro;
    row["f1_micro"] = r.metrics.f1_micro;
    row["f1_macro"] = r.metrics.f1_macro;
    row["bytes_down"] = r.bytes_down;
    row["bytes_up"] = r.bytes_up;
    doc.push_back(std::move(row));
  }
  out << doc.dump(2) << '\n';
}

void emit_round_log(const LoggerConfig& logger, const std::vector<RoundLogRow>& rows,
                    std::ostream& stdout_stream) {
  std::vector<RoundLogRow> primary, secondary;
  const EvalScope primary_scope = rows.empty() ? EvalScope::kServerGlobal : rows.front().scope;
  for (const auto& r : rows) (r.scope == primary_scope ? primary : secondary).push_back(r);

  auto write = [&](std::ostream& out, const std::vector<RoundLogRow>& block) {
    if (logger.format == LoggerConfig::Format::kJson) {
      write_round_log_json(out, block);
    } else {
      write_round_log_csv(out, block);
    }
  };
  auto write_file = [&](const std::filesystem::path& path, const std::vector<RoundLogRow>& block) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream file(path, std::ios::binary);
    if (!file) throw Error("cannot write round log '" + path.string() + "'");
    write(file, block);
  };

  if (logger.format == LoggerConfig::Format::kStdout) {
    write(stdout_stream, primary);
    if (!secondary.empty()) {
      stdout_stream << "# " << to_string(secondary.front().scope) << '\n';
      write(stdout_stream, secondary);
    }
    return;
  }
  write_file(logger.path, primary);
  if (!secondary.empty()) {
    auto sibling = logger.path;
    sibling.replace_filename(logger.path.stem().string() + ".clients" +
                             logger.path.extension().string());
    write_file(sibling, secondary);
  }
}

}  // namespace flsim
