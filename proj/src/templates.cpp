#include "flsim/templates.hpp"

#include <fstream>
#include <map>

#include "flsim/error.hpp"

namespace flsim {
namespace {

const std::map<std::string, std::string>& templates() {
  static const std::map<std::string, std::string> table{
      {"exp", R"(# Experiment configuration
dataset:
  source: blobs
  n_samples: 2000
  n_features: 20
  n_classes: 2
  separation: 6.0
  test_fraction: 0.2
  stratified: true
distribution:
  strategy: dirichlet_label
  alpha: 0.5
n_clients: 10
n_rounds: 30
eligibility: 0.2
seed: 42
device: cpu
eval:
  frequency: 1
  scope: server
logger:
  format: stdout
)"},
      {"fedavg", R"(name: fedavg
model:
  kind: linear
server:
  weighting: size
client:
  lr: 0.1
  batch_size: 32
  local_steps: 5
)"},
      {"fedprox", R"(name: fedprox
model:
  kind: linear
server:
  weighting: size
client:
  lr: 0.1
  batch_size: 32
  local_steps: 5
  mu: 0.01
)"},
      {"scaffold", R"(name: scaffold
model:
  kind: linear
server:
  weighting: size
  lr: 1.0
client:
  lr: 0.1
  batch_size: 32
  local_steps: 5
)"},
      {"fedopt", R"(name: fedopt
model:
  kind: linear
server:
  weighting: size
  optimizer: momentum   # or adam
  lr: 1.0
  beta: 0.9
client:
  lr: 0.1
  batch_size: 32
  local_steps: 5
)"},
  };
  return table;
}

}  // namespace

std::vector<std::string> list_templates() {
  std::vector<std::string> names;
  for (const auto& [name, text] : templates()) names.push_back(name);
  return names;
}

const std::string& template_text(const std::string& name) {
  auto it = templates().find(name);
  if (it == templates().end()) {
    std::string known;
    for (const auto& n : list_templates()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown template '" + name + "' (available: " + known + ")");
  }
  return it->second;
}

std::filesystem::path write_template(const std::string& name, const std::filesystem::path& dir,
                                     bool force) {
  const std::string& text = template_text(name);
  const auto path = dir / (name + ".yaml");
  if (std::filesystem::exists(path) && !force) {
    throw ConfigError("refusing to overwrite existing '" + path.string() + "' (use --force)");
  }
  std::filesystem::create_directories(dir);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  return path;
}

}  // namespace flsim
