#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flsim/algorithms.hpp"
#include "flsim/data.hpp"
#include "flsim/evaluation.hpp"
#include "flsim/models.hpp"
#include "flsim/protocol.hpp"
#include "flsim/runner.hpp"
#include "flsim/templates.hpp"
#include "oracles/oracles.hpp"
#include "support/cli.hpp"

using namespace flsim;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

ExperimentConfig small_experiment(int rounds, std::size_t clients, double eligibility) {
  auto cfg = parse_experiment_config_text(R"(dataset:
  source: blobs
  n_samples: 600
  n_features: 6
  n_classes: 3
  separation: 3.0
distribution:
  strategy: dirichlet_label
  alpha: 0.5
n_clients: 1
n_rounds: 1
seed: 5
)");
  cfg.n_rounds = rounds;
  cfg.n_clients = clients;
  cfg.eligibility = eligibility;
  return cfg;
}

struct Trajectory {
  std::vector<ModelParams> models;
  RunOutcome outcome;
};

Trajectory federate(const ExperimentConfig& exp, const std::string& alg_text,
                    AlgorithmRegistry& registry) {
  Trajectory t;
  RunOptions options;
  options.observer = [&](int, const ModelParams& m) { t.models.push_back(m); };
  t.outcome = run_federation(exp, parse_algorithm_config_text(alg_text), registry, options);
  return t;
}

double trajectory_gap(const Trajectory& a, const Trajectory& b) {
  if (a.models.size() != b.models.size() || a.models.empty()) return 1e300;
  double worst = 0.0;
  for (std::size_t t = 0; t < a.models.size(); ++t) {
    worst = std::max(worst, max_abs_difference(a.models[t], b.models[t]));
  }
  return worst;
}

Outcome aggregation_oracle() {
  Outcome o;
  Rng rng(20240601);
  const auto start = Clock::now();
  double worst = 0.0;
  for (int instance = 0; instance < 200; ++instance) {
    const std::size_t n_models = 1 + rng.index(5);
    const std::size_t n_params = 1 + rng.index(100);
    const std::size_t split = rng.index(n_params + 1);
    std::vector<ModelParams> models(n_models);
    std::vector<oracle::Vec> flat(n_models);
    std::vector<double> weights(n_models);
    for (std::size_t c = 0; c < n_models; ++c) {
      for (std::size_t i = 0; i < n_params; ++i) flat[c].push_back(rng.normal(0.0, 10.0));
      ModelParams& m = models[c];
      m.add("a", {split}, {flat[c].begin(), flat[c].begin() + static_cast<long>(split)});
      m.add("b", {n_params - split}, {flat[c].begin() + static_cast<long>(split), flat[c].end()});
      weights[c] = rng.uniform(0.01, 100.0);
    }
    const auto got = weighted_average(models, weights).flatten();
    worst = std::max(worst, oracle::max_abs_diff(got, oracle::weighted_mean(flat, weights)));
  }
  const double elapsed = seconds_since(start);
  o.require(worst <= 1e-12, "max deviation " + fmt(worst));
  o.require(elapsed < 1.0, "took " + fmt(elapsed) + " s");
  if (o.pass) o.detail = "max deviation " + fmt(worst) + ", " + fmt(elapsed) + " s";
  return o;
}

Outcome reduction_laws() {
  Outcome o;
  auto registry = AlgorithmRegistry::with_builtins();
  const auto exp = small_experiment(10, 6, 0.5);
  const std::string client = "client:\n  lr: 0.1\n  batch_size: 16\n  local_steps: 5\n";
  const auto fedavg = federate(exp, "name: fedavg\n" + client, *registry);
  const auto fedprox = federate(exp, "name: fedprox\n" + client + "  mu: 0.0\n", *registry);
  const auto fedopt = federate(
      exp, "name: fedopt\nserver:\n  optimizer: momentum\n  lr: 1.0\n  beta: 0.0\n" + client,
      *registry);
  const double prox_gap = trajectory_gap(fedavg, fedprox);
  const double opt_gap = trajectory_gap(fedavg, fedopt);
  o.require(fedavg.models.size() == 10, "expected 10 observed rounds");
  o.require(prox_gap <= 1e-9, "fedprox(mu=0) gap " + fmt(prox_gap));
  o.require(opt_gap <= 1e-9, "fedopt(beta=0, lr=1) gap " + fmt(opt_gap));

  auto one_round = exp;
  one_round.n_rounds = 1;
  const std::string single = "client:\n  lr: 0.1\n  batch_size: 16\n  local_steps: 1\n";
  const auto avg1 = federate(one_round, "name: fedavg\n" + single, *registry);
  const auto scaf1 =
      federate(one_round, "name: scaffold\nserver:\n  lr: 1.0\n" + single, *registry);
  const double scaf_gap = trajectory_gap(avg1, scaf1);
  o.require(scaf_gap <= 1e-9, "scaffold round-1 gap " + fmt(scaf_gap));
  if (o.pass) {
    o.detail = "fedprox " + fmt(prox_gap) + ", fedopt " + fmt(opt_gap) + ", scaffold " +
               fmt(scaf_gap);
  }
  return o;
}

Outcome single_client_equivalence() {
  Outcome o;
  auto registry = AlgorithmRegistry::with_builtins();
  auto exp = small_experiment(5, 1, 1.0);
  const auto alg =
      parse_algorithm_config_text("name: fedavg\nclient:\n  lr: 0.05\n  batch_size: 16\n  local_epochs: 2\n");
  std::vector<ModelParams> fed, central;
  RunOptions fed_opts, central_opts;
  fed_opts.observer = [&](int, const ModelParams& m) { fed.push_back(m); };
  central_opts.observer = [&](int, const ModelParams& m) { central.push_back(m); };
  run_federation(exp, alg, *registry, fed_opts);
  run_centralized(exp, alg, *registry, central_opts);
  o.require(fed.size() == 5, "federation observed " + std::to_string(fed.size()) + " rounds");
  o.require(central.size() == 10,
            "centralized observed " + std::to_string(central.size()) + " epochs");
  if (!o.pass) return o;
  double worst = 0.0;
  for (std::size_t t = 0; t < fed.size(); ++t) {
    worst = std::max(worst, max_abs_difference(fed[t], central[2 * t + 1]));
  }
  o.require(worst <= 1e-9, "trajectory gap " + fmt(worst));
  if (o.pass) o.detail = "trajectory gap " + fmt(worst);
  return o;
}

std::vector<oracle::Vec> rows_of(const Matrix& m) {
  std::vector<oracle::Vec> out;
  for (std::size_t i = 0; i < m.rows; ++i) out.emplace_back(m.row(i).begin(), m.row(i).end());
  return out;
}

double gradient_error(const ModelArchitecture& arch, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams params = init_params(arch, rng);
  for (auto& t : params) {
    if (t.name.ends_with(".bias")) {
      for (double& v : t.values) v = 0.1 * rng.normal();
    }
  }
  Matrix x(8, arch.n_inputs());
  for (double& v : x.data) v = rng.normal();
  std::vector<int> y(8);
  for (int& v : y) v = static_cast<int>(rng.index(arch.n_classes()));
  const auto analytic = loss_and_grad(arch, params, x, y).gradient.flatten();
  auto objective = [&](const oracle::Vec& flat) {
    ModelParams p = params;
    p.assign_flat(flat);
    return oracle::cross_entropy(oracle::forward(arch, p, rows_of(x)), y);
  };
  return oracle::norm_relative_error(analytic, oracle::finite_difference(objective, params.flatten()));
}

Outcome gradient_checks() {
  Outcome o;
  const std::vector<std::pair<std::string, ModelArchitecture>> archs{
      {"linear", ModelArchitecture::linear(10, 4)},
      {"mlp relu", ModelArchitecture::mlp(10, {16}, 4, Activation::kRelu)},
      {"mlp tanh", ModelArchitecture::mlp(10, {16}, 4, Activation::kTanh)},
  };
  double worst = 0.0;
  int checks = 0;
  for (const auto& [name, arch] : archs) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const double err = gradient_error(arch, seed);
      worst = std::max(worst, err);
      ++checks;
      o.require(err <= 1e-4, name + " seed " + std::to_string(seed) + " error " + fmt(err));
    }
  }
  if (o.pass) o.detail = std::to_string(checks) + " checks, worst " + fmt(worst);
  return o;
}

Outcome metrics_oracle() {
  Outcome o;
  Rng rng(777);
  double worst = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    const int k = 1 + static_cast<int>(rng.index(6));
    const std::size_t n = 1 + rng.index(60);
    std::vector<int> t(n), p(n);
    for (auto& v : t) v = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
    for (auto& v : p) v = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
    const Metrics m = compute_metrics(t, p, k);
    const auto e = oracle::metrics(t, p, k);
    for (auto [a, b] : {std::pair{m.accuracy, e.accuracy},
                        {m.precision_micro, e.precision_micro},
                        {m.precision_macro, e.precision_macro},
                        {m.recall_micro, e.recall_micro},
                        {m.recall_macro, e.recall_macro},
                        {m.f1_micro, e.f1_micro},
                        {m.f1_macro, e.f1_macro}}) {
      worst = std::max(worst, std::abs(a - b));
    }
    o.require(m.f1_micro == m.accuracy, "micro-F1 differs from accuracy at draw " +
                                            std::to_string(draw));
  }
  o.require(worst <= 1e-12, "max deviation " + fmt(worst));
  if (o.pass) o.detail = "max deviation " + fmt(worst);
  return o;
}

bool disjoint_cover(const Partition& p, std::size_t n, bool covering) {
  std::vector<int> seen(n, 0);
  for (const auto& list : p.assignment) {
    if (list.empty()) return false;
    for (std::size_t i : list) {
      if (i >= n) return false;
      ++seen[i];
    }
  }
  for (int s : seen) {
    if (s > 1 || (covering && s != 1)) return false;
  }
  return true;
}

Outcome partition_properties() {
  Outcome o;
  const Dataset ten = generate_blobs(2000, 3, 10, 2.0, 3);
  for (auto strategy : {PartitionStrategy::kPathologicalLabel, PartitionStrategy::kLabelQuantity}) {
    for (int k : {1, 2, 3}) {
      for (std::size_t clients : {5u, 10u}) {
        PartitionSpec spec;
        spec.strategy = strategy;
        spec.k = k;
        spec.seed = 1;
        const auto p = partition(ten, clients, spec);
        for (const auto& list : p.assignment) {
          std::set<int> labels;
          for (std::size_t i : list) labels.insert(ten.labels[i]);
          o.require(labels.size() == static_cast<std::size_t>(k),
                    to_string(strategy) + " k=" + std::to_string(k) + " gave " +
                        std::to_string(labels.size()) + " labels");
        }
        o.require(disjoint_cover(p, ten.size(), clients * static_cast<std::size_t>(k) >= 10),
                  to_string(strategy) + " overlaps or leaves a client empty");
      }
    }
  }

  const Dataset big = generate_blobs(10000, 2, 10, 1.0, 5);
  PartitionSpec flat;
  flat.strategy = PartitionStrategy::kDirichletLabel;
  flat.alpha = 1e6;
  const auto global = big.class_counts();
  double worst_tv = 0.0;
  for (const auto& h : partition_stats(big, partition(big, 10, flat)).label_histograms) {
    worst_tv = std::max(worst_tv, tv_distance(h, global));
  }
  o.require(worst_tv <= 0.05, "alpha=1e6 TV " + fmt(worst_tv));

  const Dataset many = generate_blobs(10000, 2, 10, 1.0, 5);
  std::size_t fewest = 10;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PartitionSpec sharp;
    sharp.strategy = PartitionStrategy::kDirichletLabel;
    sharp.alpha = 0.01;
    sharp.seed = seed;
    std::size_t concentrated = 0;
    for (const auto& h : partition_stats(many, partition(many, 10, sharp)).label_histograms) {
      auto sorted = h;
      std::sort(sorted.rbegin(), sorted.rend());
      const double total = std::accumulate(h.begin(), h.end(), 0.0);
      concentrated += (sorted[0] + sorted[1]) >= 0.9 * total;
    }
    fewest = std::min(fewest, concentrated);
    o.require(concentrated >= 8, "alpha=0.01 seed " + std::to_string(seed) + " concentrated " +
                                     std::to_string(concentrated) + "/10");
  }

  const Dataset six = generate_blobs(900, 4, 6, 2.0, 2);
  for (auto strategy : {PartitionStrategy::kIid, PartitionStrategy::kDirichletLabel,
                        PartitionStrategy::kQuantitySkew, PartitionStrategy::kPathologicalLabel,
                        PartitionStrategy::kCovariateShift}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      PartitionSpec spec;
      spec.strategy = strategy;
      spec.seed = seed;
      spec.k = 3;
      o.require(disjoint_cover(partition(six, 8, spec), six.size(), true),
                to_string(strategy) + " is not a disjoint exact cover");
    }
  }
  if (o.pass) {
    o.detail = "alpha=1e6 TV " + fmt(worst_tv) + ", alpha=0.01 worst seed " +
               std::to_string(fewest) + "/10 concentrated";
  }
  return o;
}

Outcome traffic_accounting() {
  Outcome o;
  auto registry = AlgorithmRegistry::with_builtins();
  const auto exp = parse_experiment_config_text(template_text("exp"));
  const auto alg = parse_algorithm_config_text(template_text("fedavg"));
  const std::uint64_t rounds = static_cast<std::uint64_t>(exp.n_rounds);
  const std::uint64_t selected = selection_size(exp.n_clients, exp.eligibility);
  const std::uint64_t params =
      alg.model.build(exp.dataset.n_features, exp.dataset.n_classes).parameter_count();
  const std::uint64_t expected = 2 * rounds * selected * (8 * params + 64);
  const auto fed = run_federation(exp, alg, *registry);
  o.require(fed.traffic.total_sent() == expected,
            "federation sent " + std::to_string(fed.traffic.total_sent()) + ", expected " +
                std::to_string(expected));
  const auto solo = run_clients_only(exp, alg, *registry);
  o.require(solo.traffic.total_sent() == 0,
            "clients-only sent " + std::to_string(solo.traffic.total_sent()));
  for (const auto& row : solo.rows) {
    o.require(row.bytes_down == 0 && row.bytes_up == 0, "clients-only round log shows traffic");
  }
  if (o.pass) o.detail = std::to_string(expected) + " bytes; clients-only 0";
  return o;
}

std::filesystem::path cli_workspace(const std::string& name) {
  const auto dir = testing::fresh_dir(name);
  for (const char* t : {"exp", "fedavg", "fedprox", "scaffold", "fedopt"}) {
    testing::run_cli(dir, std::string("get config ") + t);
  }
  return dir;
}

Outcome determinism() {
  Outcome o;
  const auto dir = cli_workspace("acceptance_determinism");
  const std::string run = "run --config config/exp.yaml federation config/fedavg.yaml --log ";
  const auto a = testing::run_cli(dir, run + "a.csv");
  const auto b = testing::run_cli(dir, run + "b.csv");
  o.require(a.exit_code == 0 && b.exit_code == 0, "run failed: " + a.err + b.err);
  const auto log_a = testing::slurp(dir / "a.csv"), log_b = testing::slurp(dir / "b.csv");
  o.require(!log_a.empty() && log_a == log_b, "csv round logs differ");
  const std::string json = "run --config config/exp.yaml federation config/scaffold.yaml --log ";
  testing::run_cli(dir, json + "a.json");
  testing::run_cli(dir, json + "b.json");
  const auto json_a = testing::slurp(dir / "a.json");
  o.require(!json_a.empty() && json_a == testing::slurp(dir / "b.json"), "json round logs differ");

  auto registry = AlgorithmRegistry::with_builtins();
  const auto exp = parse_experiment_config(dir / "config" / "exp.yaml");
  const auto reference =
      run_federation(exp, parse_algorithm_config(dir / "config" / "fedavg.yaml"), *registry);
  for (const char* other : {"fedprox", "scaffold", "fedopt"}) {
    const auto r = run_federation(
        exp, parse_algorithm_config(dir / "config" / (std::string(other) + ".yaml")), *registry);
    o.require(r.selections == reference.selections,
              std::string("selections differ for ") + other);
  }
  if (o.pass) o.detail = "byte-identical logs; selections shared by 4 algorithms";
  return o;
}

Outcome learning_analog() {
  Outcome o;
  auto registry = AlgorithmRegistry::with_builtins();
  const auto exp = parse_experiment_config_text(template_text("exp"));
  const auto start = Clock::now();
  const auto fedavg =
      run_federation(exp, parse_algorithm_config_text(template_text("fedavg")), *registry);
  const auto scaffold =
      run_federation(exp, parse_algorithm_config_text(template_text("scaffold")), *registry);
  const double elapsed = seconds_since(start);
  const double acc_avg = fedavg.rows.back().metrics.accuracy;
  const double acc_scaf = scaffold.rows.back().metrics.accuracy;
  o.require(fedavg.rows.back().round == exp.n_rounds, "last row is not the final round");
  o.require(acc_avg >= 0.90, "fedavg accuracy " + fmt(acc_avg));
  o.require(acc_scaf >= acc_avg - 0.02,
            "scaffold accuracy " + fmt(acc_scaf) + " vs fedavg " + fmt(acc_avg));
  o.require(elapsed < 60.0, "took " + fmt(elapsed) + " s");
  if (o.pass) {
    o.detail = "fedavg " + fmt(acc_avg) + ", scaffold " + fmt(acc_scaf) + ", " + fmt(elapsed) + " s";
  }
  return o;
}

Outcome cli_contract() {
  Outcome o;
  const auto dir = cli_workspace("acceptance_cli");
  for (const char* file : {"exp", "fedavg", "fedprox", "scaffold", "fedopt"}) {
    o.require(std::filesystem::exists(dir / "config" / (std::string(file) + ".yaml")),
              std::string("get config did not write ") + file);
  }
  for (const char* type : {"federation", "centralized", "clients-only"}) {
    const auto r = testing::run_cli(
        dir, std::string("run --config config/exp.yaml ") + type + " config/fedavg.yaml");
    o.require(r.exit_code == 0, std::string(type) + " exited " + std::to_string(r.exit_code) +
                                    ": " + r.err);
    o.require(r.out.find("accuracy") != std::string::npos,
              std::string(type) + " printed no round log");
  }

  auto exp_text = testing::slurp(dir / "config" / "exp.yaml");
  const auto pos = exp_text.find("eligibility: 0.2");
  exp_text.replace(pos, 16, "eligibility: 1.5");
  testing::write_file(dir / "bad_range.yaml", exp_text);
  testing::write_file(dir / "bad_key.yaml", testing::slurp(dir / "config" / "exp.yaml") +
                                                "n_rounsd: 4\n");
  testing::write_file(dir / "bad_alg.yaml", "name: fedavg\nclient:\n  lr: fast\n");
  const std::pair<std::string, std::string> malformed[] = {
      {"run --config bad_range.yaml federation config/fedavg.yaml", "eligibility"},
      {"run --config bad_key.yaml federation config/fedavg.yaml", "n_rounsd"},
      {"run --config config/exp.yaml federation bad_alg.yaml", "client.lr"},
  };
  for (const auto& [args, key] : malformed) {
    const auto r = testing::run_cli(dir, args);
    o.require(r.exit_code == 2, args + " exited " + std::to_string(r.exit_code));
    o.require(r.err.find("'" + key + "'") != std::string::npos,
              args + " did not name '" + key + "': " + r.err);
  }
  if (o.pass) o.detail = "3 experiment types ran; 3 malformed configs exited 2";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"aggregation oracle", aggregation_oracle},
      {"reduction laws", reduction_laws},
      {"single-client equivalence", single_client_equivalence},
      {"gradient checks", gradient_checks},
      {"metrics oracle", metrics_oracle},
      {"partition properties", partition_properties},
      {"traffic accounting", traffic_accounting},
      {"determinism", determinism},
      {"learning analog", learning_analog},
      {"cli contract", cli_contract},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
