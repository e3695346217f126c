#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "flsim/hyperparams.hpp"
#include "flsim/protocol.hpp"

namespace flsim {

using ClientFactory = std::function<std::unique_ptr<Client>(ClientSetup)>;
using ServerFactory = std::function<std::unique_ptr<Server>(ServerSetup)>;

struct AlgorithmDescriptor {
  std::string name;  // registry key; plug-ins use "module.Name"
  std::string summary;
  HyperParams server_defaults;
  HyperParams client_defaults;
  ClientFactory make_client;
  ServerFactory make_server;
};

// Hyper-parameters every algorithm accepts.
HyperParams common_client_defaults();
HyperParams common_server_defaults();

class AlgorithmRegistry;

// Signature of the symbol a plug-in library exports.
using PluginEntryFn = void (*)(AlgorithmRegistry&);
inline constexpr const char* kPluginEntrySymbol = "flsim_register_algorithms";

class AlgorithmRegistry {
 public:
  AlgorithmRegistry() = default;
  ~AlgorithmRegistry();
  AlgorithmRegistry(const AlgorithmRegistry&) = delete;
  AlgorithmRegistry& operator=(const AlgorithmRegistry&) = delete;

  // Registry preloaded with fedavg, fedprox, scaffold, fedopt and fedavgm.
  static std::unique_ptr<AlgorithmRegistry> with_builtins();

  // Throws RegistryError on a duplicate name. Common hyper-parameters are
  // merged into the descriptor's defaults.
  void register_algorithm(AlgorithmDescriptor descriptor);

  // Dotted names that are not registered yet are looked up as
  // <plugin dir>/<module>.so or lib<module>.so, where <module> is everything
  // before the last dot. Unknown names raise RegistryError listing every
  // registered algorithm.
  const AlgorithmDescriptor& resolve(const std::string& name);

  bool contains(const std::string& name) const { return descriptors_.contains(name); }
  std::vector<std::string> names() const;

  void set_plugin_dir(std::filesystem::path dir) { plugin_dir_ = std::move(dir); }
  const std::filesystem::path& plugin_dir() const { return plugin_dir_; }

 private:
  void load_plugin_module(const std::string& module);

  std::map<std::string, AlgorithmDescriptor> descriptors_;
  std::filesystem::path plugin_dir_;
  std::vector<void*> plugin_handles_;
};

void register_builtin_algorithms(AlgorithmRegistry& registry);

// FedProx: local objective gains (mu / 2) * ||theta - theta_global||^2.
class FedProxClient : public Client {
 public:
  explicit FedProxClient(ClientSetup setup);
  FitStats fit(ModelParams& params) override;
  double mu() const { return mu_; }

 private:
  double mu_;
};

// SCAFFOLD client, option II control update:
//   step:     theta <- theta - lr * (g - c_i + c)
//   control:  c_i+ = c_i - c + (theta_global - theta_local) / (K * lr)
// The model and the control delta c_i+ - c_i travel back as two messages.
class ScaffoldClient : public Client {
 public:
  explicit ScaffoldClient(ClientSetup setup);
  void local_training() override;
  const ModelParams& control() const { return control_; }

 private:
  ModelParams control_;
};

// SCAFFOLD server: broadcasts (theta, c); theta moves by the server learning
// rate times the weighted mean client delta; c += |E|/|C| * mean(delta c_i).
class ScaffoldServer : public Server {
 public:
  explicit ScaffoldServer(ServerSetup setup);
  const ModelParams& control() const { return control_; }
  // Control deltas received in each completed round.
  const std::vector<std::vector<ModelParams>>& control_delta_log() const { return delta_log_; }

 protected:
  void broadcast_model(const std::vector<std::size_t>& selected) override;
  ClientUpdate receive_update(std::size_t client) override;
  ModelParams aggregate(const std::vector<ClientUpdate>& updates) override;

 private:
  ModelParams control_;
  double server_lr_;
  std::vector<std::vector<ModelParams>> delta_log_;
};

// First-order optimizer applied by the server to the pseudo-gradient
// theta_prev - weighted_mean(theta_c).
class ServerOptimizer {
 public:
  enum class Kind { kMomentum, kAdam };

  struct Settings {
    Kind kind = Kind::kMomentum;
    double lr = 1.0;
    double beta = 0.9;  // momentum
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-3;
  };

  explicit ServerOptimizer(Settings settings);
  static Settings from_hyperparams(const HyperParams& params);

  ModelParams step(const ModelParams& previous, const ModelParams& pseudo_gradient);
  int steps_taken() const { return steps_; }

 private:
  Settings settings_;
  ModelParams first_moment_;
  ModelParams second_moment_;
  int steps_ = 0;
};

class FedOptServer : public Server {
 public:
  explicit FedOptServer(ServerSetup setup);

 protected:
  ModelParams aggregate(const std::vector<ClientUpdate>& updates) override;

 private:
  ServerOptimizer optimizer_;
};

}  // namespace flsim

// Plug-in libraries define their registration function with this macro.
#define FLSIM_PLUGIN_ENTRY(registry_param) \
  extern "C" void flsim_register_algorithms(::flsim::AlgorithmRegistry& registry_param)
