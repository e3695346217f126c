#include "flsim/evaluation.hpp"

#include "flsim/error.hpp"

namespace flsim {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::vector<ClassCounts> confusion_counts(std::span<const int> y_true, std::span<const int> y_pred,
                                          int n_classes) {
  if (y_true.size() != y_pred.size()) {
    throw PreconditionError("confusion_counts: y_true has " + std::to_string(y_true.size()) +
                            " labels, y_pred has " + std::to_string(y_pred.size()));
  }
  if (y_true.empty()) throw PreconditionError("confusion_counts: empty label vectors");
  if (n_classes <= 0) throw PreconditionError("confusion_counts: n_classes must be positive");
  std::vector<ClassCounts> counts(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i];
    const int p = y_pred[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes) {
      throw PreconditionError("confusion_counts: label outside [0, n_classes)");
    }
    if (t == p) {
      ++counts[static_cast<std::size_t>(t)].tp;
    } else {
      ++counts[static_cast<std::size_t>(p)].fp;
      ++counts[static_cast<std::size_t>(t)].fn;
    }
  }
  return counts;
}

Metrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred, int n_classes) {
  const auto counts = confusion_counts(y_true, y_pred, n_classes);
  std::size_t tp = 0, fp = 0, fn = 0;
  double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
  for (const auto& c : counts) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
    p_sum += ratio(c.tp, c.tp + c.fp);
    r_sum += ratio(c.tp, c.tp + c.fn);
    f_sum += ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  }
  const auto classes = static_cast<double>(counts.size());
  Metrics m;
  m.accuracy = ratio(tp, y_true.size());
  m.precision_micro = ratio(tp, tp + fp);
  m.recall_micro = ratio(tp, tp + fn);
  m.f1_micro = ratio(2 * tp, 2 * tp + fp + fn);
  m.precision_macro = p_sum / classes;
  m.recall_macro = r_sum / classes;
  m.f1_macro = f_sum / classes;
  return m;
}

std::string to_string(EvalScope scope) {
  return scope == EvalScope::kServerGlobal ? "server_global" : "client_mean";
}

void EvalSchedule::validate() const {
  if (frequency < 1) throw ConfigError("eval.frequency must be >= 1");
}

bool EvalSchedule::due(int round, int total_rounds) const {
  return round == total_rounds || (round > 0 && round % frequency == 0);
}

std::vector<int> EvalSchedule::rounds(int total_rounds) const {
  std::vector<int> out;
  for (int t = frequency; t < total_rounds; t += frequency) out.push_back(t);
  out.push_back(total_rounds);
  return out;
}

EvalTarget parse_eval_target(const std::string& name) {
  if (name == "server") return EvalTarget::kServer;
  if (name == "clients") return EvalTarget::kClients;
  if (name == "both") return EvalTarget::kBoth;
  throw ConfigError("eval.scope must be one of server, clients, both (got '" + name + "')");
}

std::string to_string(EvalTarget target) {
  switch (target) {
    case EvalTarget::kServer: return "server";
    case EvalTarget::kClients: return "clients";
    case EvalTarget::kBoth: return "both";
  }
  return "server";
}

MetricsReport evaluate_model(const ModelArchitecture& arch, const ModelParams& params,
                             const DataView& test, int round, EvalScope scope) {
  Matrix x;
  std::vector<int> y;
  test.gather_all(x, y);
  auto predicted = predict(arch, params, x);
  return MetricsReport{round, scope,
                       compute_metrics(y, predicted, static_cast<int>(arch.n_classes())),
                       y.size()};
}

MetricsReport combine_client_reports(std::span<const MetricsReport> reports, int round,
                                     bool weight_by_size) {
  MetricsReport out{round, EvalScope::kClientMean, {}, 0};
  double total_weight = 0.0;
  for (const auto& r : reports) {
    const double w = weight_by_size ? static_cast<double>(r.n_samples) : 1.0;
    total_weight += w;
    out.n_samples += r.n_samples;
    out.metrics.accuracy += w * r.metrics.accuracy;
    out.metrics.precision_micro += w * r.metrics.precision_micro;
    out.metrics.precision_macro += w * r.metrics.precision_macro;
    out.metrics.recall_micro += w * r.metrics.recall_micro;
    out.metrics.recall_macro += w * r.metrics.recall_macro;
    out.metrics.f1_micro += w * r.metrics.f1_micro;
    out.metrics.f1_macro += w * r.metrics.f1_macro;
  }
  if (total_weight > 0.0) {
    for (double* field : {&out.metrics.accuracy, &out.metrics.precision_micro,
                          &out.metrics.precision_macro, &out.metrics.recall_micro,
                          &out.metrics.recall_macro, &out.metrics.f1_micro,
                          &out.metrics.f1_macro}) {
      *field /= total_weight;
    }
  }
  return out;
}

}  // namespace flsim
