#include "flsim/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "flsim/algorithms.hpp"
#include "flsim/error.hpp"

namespace flsim {

void ExperimentConfig::override_seed(std::uint64_t new_seed) {
  seed = new_seed;
  if (!distribution_seed_given) distribution.seed = new_seed;
}

ModelArchitecture ModelConfig::build(std::size_t n_features, int n_classes) const {
  const auto classes = static_cast<std::size_t>(n_classes);
  if (kind == ModelKind::kLinear) return ModelArchitecture::linear(n_features, classes);
  return ModelArchitecture::mlp(n_features, hidden, classes, activation);
}

namespace {

// Wraps a YAML document and produces located error messages.
class Reader {
 public:
  explicit Reader(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& key,
                         const std::string& what) const {
    std::ostringstream out;
    out << origin_;
    if (node.IsDefined() && node.Mark().line >= 0) {
      out << ':' << node.Mark().line + 1 << ':' << node.Mark().column + 1;
    }
    out << ": key '" << key << "': " << what;
    throw ConfigError(out.str());
  }

  [[noreturn]] void fail_document(const std::string& what) const {
    throw ConfigError(origin_ + ": " + what);
  }

  void require_map(const YAML::Node& node, const std::string& key) const {
    if (!node.IsMap()) fail(node, key, "expected a mapping");
  }

  void reject_unknown(const YAML::Node& map, const std::string& prefix,
                      const std::set<std::string>& allowed) const {
    std::set<std::string> seen;
    for (const auto& item : map) {
      const auto key = item.first.as<std::string>();
      if (!seen.insert(key).second) fail(item.first, join(prefix, key), "duplicate key");
      if (!allowed.contains(key)) {
        std::string expected;
        for (const auto& a : allowed) expected += (expected.empty() ? "" : ", ") + a;
        fail(item.first, join(prefix, key), "unknown key (expected one of: " + expected + ")");
      }
    }
  }

  static std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
  }

  double number(const YAML::Node& node, const std::string& key) const {
    if (!node.IsScalar()) fail(node, key, "expected a number");
    try {
      double value = node.as<double>();
      if (!std::isfinite(value)) fail(node, key, "expected a finite number");
      return value;
    } catch (const YAML::BadConversion&) {
      fail(node, key, "expected a number, got '" + node.Scalar() + "'");
    }
  }

  long long integer(const YAML::Node& node, const std::string& key) const {
    if (!node.IsScalar()) fail(node, key, "expected an integer");
    try {
      return node.as<long long>();
    } catch (const YAML::BadConversion&) {
      fail(node, key, "expected an integer, got '" + node.Scalar() + "'");
    }
  }

  bool boolean(const YAML::Node& node, const std::string& key) const {
    if (!node.IsScalar()) fail(node, key, "expected true or false");
    try {
      return node.as<bool>();
    } catch (const YAML::BadConversion&) {
      fail(node, key, "expected true or false, got '" + node.Scalar() + "'");
    }
  }

  std::string text(const YAML::Node& node, const std::string& key) const {
    if (!node.IsScalar()) fail(node, key, "expected a string");
    return node.Scalar();
  }

  std::size_t positive_count(const YAML::Node& node, const std::string& key) const {
    long long value = integer(node, key);
    if (value < 1) fail(node, key, "value " + std::to_string(value) + " out of range [1, inf)");
    return static_cast<std::size_t>(value);
  }

 private:
  std::string origin_;
};

YAML::Node load_document(const std::string& text, const std::string& origin) {
  try {
    YAML::Node root = YAML::Load(text);
    if (!root.IsMap()) throw ConfigError(origin + ": expected a YAML mapping at the top level");
    return root;
  } catch (const YAML::Exception& e) {
    std::ostringstream out;
    out << origin << ':' << e.mark.line + 1 << ':' << e.mark.column + 1
        << ": malformed YAML: " << e.msg;
    throw ConfigError(out.str());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void parse_dataset(const Reader& r, const YAML::Node& node, DatasetConfig& out) {
  r.require_map(node, "dataset");
  r.reject_unknown(node, "dataset",
                   {"source", "n_samples", "n_features", "n_classes", "separation", "path",
                    "label_column", "test_fraction", "stratified"});
  if (!node["source"]) r.fail(node, "dataset.source", "missing required key");
  const std::string source = r.text(node["source"], "dataset.source");
  if (source == "blobs") {
    out.source = DatasetConfig::Source::kBlobs;
  } else if (source == "csv") {
    out.source = DatasetConfig::Source::kCsv;
  } else {
    r.fail(node["source"], "dataset.source", "expected blobs or csv, got '" + source + "'");
  }
  if (auto n = node["n_samples"]) out.n_samples = r.positive_count(n, "dataset.n_samples");
  if (auto n = node["n_features"]) out.n_features = r.positive_count(n, "dataset.n_features");
  if (auto n = node["n_classes"]) {
    out.n_classes = static_cast<int>(r.positive_count(n, "dataset.n_classes"));
  }
  if (auto n = node["separation"]) {
    out.separation = r.number(n, "dataset.separation");
    if (out.separation < 0.0) r.fail(n, "dataset.separation", "must be >= 0");
  }
  if (auto n = node["path"]) out.path = r.text(n, "dataset.path");
  if (auto n = node["label_column"]) out.label_column = r.text(n, "dataset.label_column");
  if (auto n = node["test_fraction"]) {
    out.test_fraction = r.number(n, "dataset.test_fraction");
    if (!(out.test_fraction > 0.0 && out.test_fraction < 1.0)) {
      r.fail(n, "dataset.test_fraction", "value out of range (0,1)");
    }
  }
  if (auto n = node["stratified"]) out.stratified = r.boolean(n, "dataset.stratified");
  if (out.source == DatasetConfig::Source::kCsv && out.path.empty()) {
    r.fail(node, "dataset.path", "required when source is csv");
  }
}

void parse_distribution(const Reader& r, const YAML::Node& node, ExperimentConfig& out) {
  r.require_map(node, "distribution");
  r.reject_unknown(node, "distribution", {"strategy", "alpha", "beta", "k", "sigma", "seed"});
  auto& spec = out.distribution;
  if (auto n = node["strategy"]) {
    try {
      spec.strategy = parse_partition_strategy(r.text(n, "distribution.strategy"));
    } catch (const ConfigError& e) {
      r.fail(n, "distribution.strategy", e.what());
    }
  }
  if (auto n = node["alpha"]) {
    spec.alpha = r.number(n, "distribution.alpha");
    if (!(spec.alpha > 0.0)) r.fail(n, "distribution.alpha", "value out of range (0,inf)");
  }
  if (auto n = node["beta"]) {
    spec.beta = r.number(n, "distribution.beta");
    if (!(spec.beta > 0.0)) r.fail(n, "distribution.beta", "value out of range (0,inf)");
  }
  if (auto n = node["k"]) spec.k = static_cast<int>(r.positive_count(n, "distribution.k"));
  if (auto n = node["sigma"]) {
    spec.sigma = r.number(n, "distribution.sigma");
    if (!(spec.sigma >= 0.0)) r.fail(n, "distribution.sigma", "value out of range [0,inf)");
  }
  if (auto n = node["seed"]) {
    spec.seed = static_cast<std::uint64_t>(r.integer(n, "distribution.seed"));
    out.distribution_seed_given = true;
  }
}

void parse_eval(const Reader& r, const YAML::Node& node, EvalConfig& out) {
  r.require_map(node, "eval");
  r.reject_unknown(node, "eval", {"frequency", "scope", "weighting"});
  if (auto n = node["frequency"]) {
    out.schedule.frequency = static_cast<int>(r.positive_count(n, "eval.frequency"));
  }
  if (auto n = node["scope"]) {
    try {
      out.scope = parse_eval_target(r.text(n, "eval.scope"));
    } catch (const ConfigError& e) {
      r.fail(n, "eval.scope", "expected server, clients or both");
    }
  }
  if (auto n = node["weighting"]) {
    const std::string w = r.text(n, "eval.weighting");
    if (w != "size" && w != "uniform") r.fail(n, "eval.weighting", "expected size or uniform");
    out.weight_by_size = w == "size";
  }
}

void parse_logger(const Reader& r, const YAML::Node& node, LoggerConfig& out) {
  r.require_map(node, "logger");
  r.reject_unknown(node, "logger", {"format", "path"});
  if (auto n = node["format"]) {
    const std::string f = r.text(n, "logger.format");
    if (f == "stdout") {
      out.format = LoggerConfig::Format::kStdout;
    } else if (f == "csv") {
      out.format = LoggerConfig::Format::kCsv;
    } else if (f == "json") {
      out.format = LoggerConfig::Format::kJson;
    } else {
      r.fail(n, "logger.format", "expected stdout, csv or json, got '" + f + "'");
    }
  }
  if (auto n = node["path"]) out.path = r.text(n, "logger.path");
  if (out.format != LoggerConfig::Format::kStdout && out.path.empty()) {
    r.fail(node, "logger.path", "required when format is csv or json");
  }
}

HyperParams parse_hyperparams(const Reader& r, const YAML::Node& node, const std::string& section,
                              std::map<std::string, std::string>& locations) {
  HyperParams out;
  if (!node || node.IsNull()) return out;
  r.require_map(node, section);
  for (const auto& item : node) {
    const auto key = item.first.as<std::string>();
    const std::string full = section + "." + key;
    if (!item.second.IsScalar()) r.fail(item.second, full, "expected a scalar value");
    const auto mark = item.second.Mark();
    if (mark.line >= 0) {
      locations[full] = std::to_string(mark.line + 1) + ':' + std::to_string(mark.column + 1);
    }
    try {
      out.set(key, item.second.as<double>());
    } catch (const YAML::BadConversion&) {
      out.set(key, item.second.Scalar());
    }
  }
  return out;
}

void parse_model(const Reader& r, const YAML::Node& node, ModelConfig& out) {
  r.require_map(node, "model");
  r.reject_unknown(node, "model", {"kind", "hidden", "activation"});
  if (auto n = node["kind"]) {
    const std::string kind = r.text(n, "model.kind");
    if (kind == "linear") {
      out.kind = ModelKind::kLinear;
    } else if (kind == "mlp") {
      out.kind = ModelKind::kMlp;
    } else {
      r.fail(n, "model.kind", "expected linear or mlp, got '" + kind + "'");
    }
  }
  if (auto n = node["hidden"]) {
    if (!n.IsSequence()) r.fail(n, "model.hidden", "expected a list of layer widths");
    for (const auto& width : n) out.hidden.push_back(r.positive_count(width, "model.hidden"));
  }
  if (auto n = node["activation"]) {
    const std::string a = r.text(n, "model.activation");
    if (a == "relu") {
      out.activation = Activation::kRelu;
    } else if (a == "tanh") {
      out.activation = Activation::kTanh;
    } else {
      r.fail(n, "model.activation", "expected relu or tanh, got '" + a + "'");
    }
  }
  if (out.kind == ModelKind::kLinear && !out.hidden.empty()) {
    r.fail(node["hidden"], "model.hidden", "a linear model has no hidden layers");
  }
  if (out.kind == ModelKind::kMlp && out.hidden.empty()) {
    r.fail(node, "model.hidden", "an mlp needs at least one hidden layer");
  }
}

}  // namespace

ExperimentConfig parse_experiment_config_text(const std::string& text, const std::string& origin) {
  const Reader r(origin);
  const YAML::Node root = load_document(text, origin);
  r.reject_unknown(root, "",
                   {"dataset", "distribution", "n_clients", "n_rounds", "eligibility", "seed",
                    "device", "parallel_clients", "eval", "logger"});
  ExperimentConfig out;
  out.source = origin;

  if (!root["dataset"]) r.fail_document("key 'dataset': missing required key");
  parse_dataset(r, root["dataset"], out.dataset);
  if (!root["n_clients"]) r.fail_document("key 'n_clients': missing required key");
  out.n_clients = r.positive_count(root["n_clients"], "n_clients");
  if (!root["n_rounds"]) r.fail_document("key 'n_rounds': missing required key");
  out.n_rounds = static_cast<int>(r.positive_count(root["n_rounds"], "n_rounds"));
  if (auto n = root["eligibility"]) {
    out.eligibility = r.number(n, "eligibility");
    if (!(out.eligibility > 0.0 && out.eligibility <= 1.0)) {
      std::ostringstream v;
      v << out.eligibility;
      r.fail(n, "eligibility", "value " + v.str() + " out of range (0,1]");
    }
  }
  if (auto n = root["seed"]) out.seed = static_cast<std::uint64_t>(r.integer(n, "seed"));
  out.distribution.seed = out.seed;
  if (auto n = root["distribution"]) {
    out.distribution_given = true;
    parse_distribution(r, n, out);
  }
  if (auto n = root["device"]) out.device = r.text(n, "device");
  if (auto n = root["parallel_clients"]) {
    out.parallel_clients = r.boolean(n, "parallel_clients");
  }
  if (auto n = root["eval"]) parse_eval(r, n, out.eval);
  if (auto n = root["logger"]) parse_logger(r, n, out.logger);
  return out;
}

AlgorithmConfig parse_algorithm_config_text(const std::string& text, const std::string& origin) {
  const Reader r(origin);
  const YAML::Node root = load_document(text, origin);
  r.reject_unknown(root, "", {"name", "model", "server", "client"});
  AlgorithmConfig out;
  out.source = origin;
  if (!root["name"]) r.fail_document("key 'name': missing required key");
  out.name = r.text(root["name"], "name");
  if (out.name.empty()) r.fail(root["name"], "name", "must not be empty");
  if (auto n = root["model"]) parse_model(r, n, out.model);
  out.server = parse_hyperparams(r, root["server"], "server", out.locations);
  out.client = parse_hyperparams(r, root["client"], "client", out.locations);
  return out;
}

std::string AlgorithmConfig::where(const std::string& key) const {
  auto it = locations.find(key);
  return it == locations.end() ? source.string() : source.string() + ':' + it->second;
}

ExperimentConfig parse_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config_text(read_file(path), path.string());
}

AlgorithmConfig parse_algorithm_config(const std::filesystem::path& path) {
  return parse_algorithm_config_text(read_file(path), path.string());
}

std::variant<ExperimentConfig, AlgorithmConfig> parse_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const YAML::Node root = load_document(text, path.string());
  if (root["name"]) return parse_algorithm_config_text(text, path.string());
  return parse_experiment_config_text(text, path.string());
}

namespace {

void check_section(const AlgorithmConfig& config, const HyperParams& given,
                   const HyperParams& defaults, const std::string& section,
                   const std::string& algorithm) {
  for (const auto& [key, value] : given.values()) {
    const std::string full = section + "." + key;
    if (!defaults.contains(key)) {
      std::string expected;
      for (const auto& k : defaults.keys()) expected += (expected.empty() ? "" : ", ") + k;
      throw ConfigError(config.where(full) + ": key '" + full + "': unknown hyper-parameter for '" +
                        algorithm + "' (expected one of: " + expected + ")");
    }
    const auto& reference = defaults.values().at(key);
    if (value.index() != reference.index()) {
      throw ConfigError(config.where(full) + ": key '" + full + "': expected a " +
                        (std::holds_alternative<double>(reference) ? "number" : "string"));
    }
  }
}

std::size_t whole_number(const AlgorithmConfig& config, const HyperParams& p,
                         const std::string& key, double minimum) {
  const double value = p.number(key);
  if (value < minimum || std::floor(value) != value) {
    throw ConfigError(config.where("client." + key) + ": key 'client." + key +
                      "': expected an integer >= " +
                      std::to_string(static_cast<long long>(minimum)));
  }
  return static_cast<std::size_t>(value);
}

}  // namespace

ResolvedAlgorithm resolve_hyperparams(const AlgorithmConfig& config,
                                      const AlgorithmDescriptor& descriptor) {
  check_section(config, config.server, descriptor.server_defaults, "server", descriptor.name);
  check_section(config, config.client, descriptor.client_defaults, "client", descriptor.name);

  ResolvedAlgorithm out;
  out.server = descriptor.server_defaults.merged(config.server);
  out.client = descriptor.client_defaults.merged(config.client);

  const auto& c = out.client;
  out.optimizer.learning_rate = c.number("lr");
  out.optimizer.momentum = c.number("momentum");
  out.optimizer.weight_decay = c.number("weight_decay");
  if (!(out.optimizer.learning_rate >= 0.0)) {
    throw ConfigError(config.where("client.lr") + ": key 'client.lr': value out of range [0,inf)");
  }
  if (!(out.optimizer.momentum >= 0.0 && out.optimizer.momentum < 1.0)) {
    throw ConfigError(config.where("client.momentum") + ": key 'client.momentum': value out of range [0,1)");
  }
  if (!(out.optimizer.weight_decay >= 0.0)) {
    throw ConfigError(config.where("client.weight_decay") + ": key 'client.weight_decay': value out of range [0,inf)");
  }

  const std::size_t batch = whole_number(config, c, "batch_size", 1);
  const bool steps_given = config.client.contains("local_steps");
  const bool epochs_given = config.client.contains("local_epochs");
  if (steps_given && epochs_given) {
    throw ConfigError(config.where("client.local_steps") + ": key 'client.local_steps': set either local_steps or local_epochs, "
                      "not both");
  }
  if (steps_given) {
    out.work = LocalWorkSpec::steps(whole_number(config, c, "local_steps", 1), batch);
  } else {
    out.work = LocalWorkSpec::epochs(whole_number(config, c, "local_epochs", 1), batch);
  }

  const std::string weighting = out.server.text("weighting");
  if (weighting != "size" && weighting != "uniform") {
    throw ConfigError(config.where("server.weighting") + ": key 'server.weighting': expected size or uniform");
  }
  out.weight_by_size = weighting == "size";

  auto in_range = [&](const HyperParams& section, const std::string& prefix, const char* key,
                      double lo, double hi, bool lo_open, const char* range) {
    if (!section.contains(key)) return;
    const double v = section.number(key);
    if (!((lo_open ? v > lo : v >= lo) && v < hi)) {
      const std::string full = prefix + key;
      throw ConfigError(config.where(full) + ": key '" + full + "': value out of range " + range);
    }
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  in_range(out.client, "client.", "mu", 0.0, kInf, false, "[0,inf)");
  in_range(out.server, "server.", "lr", 0.0, kInf, true, "(0,inf)");
  in_range(out.server, "server.", "beta", 0.0, 1.0, false, "[0,1)");
  in_range(out.server, "server.", "beta1", 0.0, 1.0, false, "[0,1)");
  in_range(out.server, "server.", "beta2", 0.0, 1.0, false, "[0,1)");
  in_range(out.server, "server.", "epsilon", 0.0, kInf, true, "(0,inf)");
  if (out.server.contains("optimizer")) {
    const std::string kind = out.server.text("optimizer");
    if (kind != "momentum" && kind != "adam") {
      throw ConfigError(config.where("server.optimizer") +
                        ": key 'server.optimizer': expected momentum or adam");
    }
  }
  return out;
}

}  // namespace flsim
