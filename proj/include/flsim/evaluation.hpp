#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flsim/data.hpp"
#include "flsim/models.hpp"

namespace flsim {

struct ClassCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  bool operator==(const ClassCounts&) const = default;
};

std::vector<ClassCounts> confusion_counts(std::span<const int> y_true, std::span<const int> y_pred,
                                          int n_classes);

struct Metrics {
  double accuracy = 0.0;
  double precision_micro = 0.0;
  double precision_macro = 0.0;
  double recall_micro = 0.0;
  double recall_macro = 0.0;
  double f1_micro = 0.0;
  double f1_macro = 0.0;
};

// Precision or recall with a zero denominator counts as 0, and so does F1
// when both components are 0. Macro averages run over all n_classes.
Metrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred, int n_classes);

enum class EvalScope { kServerGlobal, kClientMean };

std::string to_string(EvalScope scope);

struct MetricsReport {
  int round = 0;
  EvalScope scope = EvalScope::kServerGlobal;
  Metrics metrics;
  std::size_t n_samples = 0;
};

// Evaluate every `frequency` rounds and always after the final round.
struct EvalSchedule {
  int frequency = 1;

  void validate() const;
  bool due(int round, int total_rounds) const;
  std::vector<int> rounds(int total_rounds) const;
};

enum class EvalTarget { kServer, kClients, kBoth };

EvalTarget parse_eval_target(const std::string& name);
std::string to_string(EvalTarget target);

MetricsReport evaluate_model(const ModelArchitecture& arch, const ModelParams& params,
                             const DataView& test, int round, EvalScope scope);

// Mean of per-client reports, weighted by test-set size or uniform.
MetricsReport combine_client_reports(std::span<const MetricsReport> reports, int round,
                                     bool weight_by_size);

}  // namespace flsim
