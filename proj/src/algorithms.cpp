#include "flsim/algorithms.hpp"

#include <dlfcn.h>

#include <cmath>

#include "flsim/error.hpp"

namespace flsim {

HyperParams common_client_defaults() {
  return HyperParams{
      {"lr", 0.1},          {"momentum", 0.0},   {"weight_decay", 0.0},
      {"batch_size", 32.0}, {"local_epochs", 1.0}, {"local_steps", 0.0},
  };
}

HyperParams common_server_defaults() { return HyperParams{{"weighting", std::string("size")}}; }

AlgorithmRegistry::~AlgorithmRegistry() {
  // Descriptors may hold code from the plug-ins; drop them first.
  descriptors_.clear();
  for (void* handle : plugin_handles_) dlclose(handle);
}

std::unique_ptr<AlgorithmRegistry> AlgorithmRegistry::with_builtins() {
  auto registry = std::make_unique<AlgorithmRegistry>();
  register_builtin_algorithms(*registry);
  return registry;
}

void AlgorithmRegistry::register_algorithm(AlgorithmDescriptor descriptor) {
  if (descriptor.name.empty()) throw RegistryError("algorithm name must not be empty");
  if (descriptors_.contains(descriptor.name)) {
    throw RegistryError("algorithm '" + descriptor.name + "' is already registered");
  }
  if (!descriptor.make_client || !descriptor.make_server) {
    throw RegistryError("algorithm '" + descriptor.name + "' needs client and server factories");
  }
  descriptor.client_defaults = common_client_defaults().merged(descriptor.client_defaults);
  descriptor.server_defaults = common_server_defaults().merged(descriptor.server_defaults);
  std::string key = descriptor.name;
  descriptors_.emplace(std::move(key), std::move(descriptor));
}

std::vector<std::string> AlgorithmRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, descriptor] : descriptors_) out.push_back(name);
  return out;
}

const AlgorithmDescriptor& AlgorithmRegistry::resolve(const std::string& name) {
  if (auto it = descriptors_.find(name); it != descriptors_.end()) return it->second;
  const auto dot = name.rfind('.');
  if (dot != std::string::npos && dot > 0 && !plugin_dir_.empty()) {
    load_plugin_module(name.substr(0, dot));
    if (auto it = descriptors_.find(name); it != descriptors_.end()) return it->second;
  }
  std::string known;
  for (const auto& n : names()) known += (known.empty() ? "" : ", ") + n;
  std::string message = "unknown algorithm '" + name + "'; registered algorithms: " + known;
  if (dot != std::string::npos && plugin_dir_.empty()) {
    message += " (dotted names need --plugins DIR)";
  }
  throw RegistryError(message);
}

void AlgorithmRegistry::load_plugin_module(const std::string& module) {
  std::string relative = module;
  for (auto& ch : relative) {
    if (ch == '.') ch = '/';
  }
  const std::filesystem::path rel(relative);
  const std::filesystem::path candidates[] = {
      plugin_dir_ / (rel.string() + ".so"),
      plugin_dir_ / rel.parent_path() / ("lib" + rel.filename().string() + ".so"),
  };
  for (const auto& candidate : candidates) {
    if (!std::filesystem::exists(candidate)) continue;
    void* handle = dlopen(candidate.c_str(), RTLD_NOW | RTLD_LOCAL);
    if (handle == nullptr) {
      throw RegistryError("cannot load plug-in '" + candidate.string() + "': " + dlerror());
    }
    auto entry = reinterpret_cast<PluginEntryFn>(dlsym(handle, kPluginEntrySymbol));
    if (entry == nullptr) {
      dlclose(handle);
      throw RegistryError("plug-in '" + candidate.string() + "' does not export " +
                          kPluginEntrySymbol);
    }
    plugin_handles_.push_back(handle);
    entry(*this);
    return;
  }
  throw RegistryError("no plug-in library for module '" + module + "' in " +
                      plugin_dir_.string());
}

FedProxClient::FedProxClient(ClientSetup setup)
    : Client(std::move(setup)), mu_(hyperparams().number_or("mu", 0.01)) {
  if (!(mu_ >= 0.0)) throw ConfigError("fedprox: mu must be >= 0");
}

FitStats FedProxClient::fit(ModelParams& params) {
  const ModelParams anchor = params;
  Regularizer proximal{&proximal_term, &anchor, mu_};
  StepHooks hooks;
  hooks.regularizer = &proximal;
  return trainer().fit(params, train_data(), hooks);
}

ScaffoldClient::ScaffoldClient(ClientSetup setup) : Client(std::move(setup)) {}

void ScaffoldClient::local_training() {
  ModelParams params = receive_model();
  const ModelParams server_control = receive_control(channel(), id(), ActorId::server());
  require_compatible(params, server_control, "scaffold control variate");
  if (control_.empty()) control_ = params.zeros_like();
  const ModelParams global = params;

  // g - c_i + c
  ModelParams correction = difference(server_control, control_);
  StepHooks hooks;
  hooks.gradient_offset = &correction;
  trainer().reset_optimizer();
  const FitStats stats = trainer().fit(params, train_data(), hooks);

  const double scale_factor = static_cast<double>(stats.steps) * trainer().optimizer().learning_rate;
  if (!(scale_factor > 0.0)) {
    throw PreconditionError("scaffold: local steps times learning rate must be positive");
  }
  ModelParams updated = difference(control_, server_control);
  add_scaled(updated, difference(global, params), 1.0 / scale_factor);
  ModelParams delta = difference(updated, control_);
  control_ = std::move(updated);

  local_model_ = std::move(params);
  send_model(local_model_);
  send_control(channel(), id(), ActorId::server(), delta);
}

ScaffoldServer::ScaffoldServer(ServerSetup setup)
    : Server(std::move(setup)), server_lr_(hyperparams().number_or("lr", 1.0)) {
  control_ = global_.zeros_like();
}

void ScaffoldServer::broadcast_model(const std::vector<std::size_t>& selected) {
  Server::broadcast_model(selected);
  channel().broadcast(Payload::control(control_), ActorId::server(), actors(selected));
}

ClientUpdate ScaffoldServer::receive_update(std::size_t client) {
  ClientUpdate update = Server::receive_update(client);
  update.control = receive_control(channel(), ActorId::server(), this->client(client).id());
  return update;
}

ModelParams ScaffoldServer::aggregate(const std::vector<ClientUpdate>& updates) {
  const ModelParams mean = Server::aggregate(updates);
  ModelParams next = global_;
  add_scaled(next, difference(mean, global_), server_lr_);

  std::vector<ModelParams> deltas;
  ModelParams delta_sum = control_.zeros_like();
  for (const auto& u : updates) {
    add_scaled(delta_sum, u.control, 1.0);
    deltas.push_back(u.control);
  }
  // |E|/|C| * mean_E(delta) == sum_E(delta) / |C|
  add_scaled(control_, delta_sum, 1.0 / static_cast<double>(client_count()));
  delta_log_.push_back(std::move(deltas));
  return next;
}

ServerOptimizer::ServerOptimizer(Settings settings) : settings_(settings) {
  if (!(settings_.lr > 0.0)) throw ConfigError("server optimizer lr must be > 0");
  if (!(settings_.beta >= 0.0 && settings_.beta < 1.0)) {
    throw ConfigError("server momentum beta must be in [0, 1)");
  }
  if (!(settings_.beta1 >= 0.0 && settings_.beta1 < 1.0) ||
      !(settings_.beta2 >= 0.0 && settings_.beta2 < 1.0)) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!(settings_.epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
}

ServerOptimizer::Settings ServerOptimizer::from_hyperparams(const HyperParams& params) {
  Settings s;
  const std::string kind = params.text_or("optimizer", "momentum");
  if (kind == "momentum") {
    s.kind = Kind::kMomentum;
  } else if (kind == "adam") {
    s.kind = Kind::kAdam;
  } else {
    throw ConfigError("server.optimizer must be 'momentum' or 'adam' (got '" + kind + "')");
  }
  s.lr = params.number_or("lr", s.lr);
  s.beta = params.number_or("beta", s.beta);
  s.beta1 = params.number_or("beta1", s.beta1);
  s.beta2 = params.number_or("beta2", s.beta2);
  s.epsilon = params.number_or("epsilon", s.epsilon);
  return s;
}

ModelParams ServerOptimizer::step(const ModelParams& previous, const ModelParams& pseudo_gradient) {
  require_compatible(previous, pseudo_gradient, "server optimizer");
  ++steps_;
  ModelParams next = previous;
  if (first_moment_.empty()) first_moment_ = previous.zeros_like();

  if (settings_.kind == Kind::kMomentum) {
    for (std::size_t t = 0; t < next.tensor_count(); ++t) {
      auto& m = first_moment_[t].values;
      const auto& g = pseudo_gradient[t].values;
      auto& theta = next[t].values;
      for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = settings_.beta * m[i] + g[i];
        theta[i] -= settings_.lr * m[i];
      }
    }
    return next;
  }

  if (second_moment_.empty()) second_moment_ = previous.zeros_like();
  const double correction1 = 1.0 - std::pow(settings_.beta1, steps_);
  const double correction2 = 1.0 - std::pow(settings_.beta2, steps_);
  for (std::size_t t = 0; t < next.tensor_count(); ++t) {
    auto& m = first_moment_[t].values;
    auto& v = second_moment_[t].values;
    const auto& g = pseudo_gradient[t].values;
    auto& theta = next[t].values;
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = settings_.beta1 * m[i] + (1.0 - settings_.beta1) * g[i];
      v[i] = settings_.beta2 * v[i] + (1.0 - settings_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= settings_.lr * m_hat / (std::sqrt(v_hat) + settings_.epsilon);
    }
  }
  return next;
}

FedOptServer::FedOptServer(ServerSetup setup)
    : Server(std::move(setup)), optimizer_(ServerOptimizer::from_hyperparams(hyperparams())) {}

ModelParams FedOptServer::aggregate(const std::vector<ClientUpdate>& updates) {
  const ModelParams mean = Server::aggregate(updates);
  return optimizer_.step(global_, difference(global_, mean));
}

namespace {

template <typename C>
ClientFactory client_factory() {
  return [](ClientSetup setup) -> std::unique_ptr<Client> {
    return std::make_unique<C>(std::move(setup));
  };
}

template <typename S>
ServerFactory server_factory() {
  return [](ServerSetup setup) -> std::unique_ptr<Server> {
    return std::make_unique<S>(std::move(setup));
  };
}

}  // namespace

void register_builtin_algorithms(AlgorithmRegistry& registry) {
  registry.register_algorithm({"fedavg", "Federated averaging (base protocol)", {}, {},
                               client_factory<Client>(), server_factory<Server>()});
  registry.register_algorithm({"fedprox", "FedAvg with a proximal local objective", {},
                               HyperParams{{"mu", 0.01}}, client_factory<FedProxClient>(),
                               server_factory<Server>()});
  registry.register_algorithm({"scaffold", "Control-variate corrected local steps",
                               HyperParams{{"lr", 1.0}}, {}, client_factory<ScaffoldClient>(),
                               server_factory<ScaffoldServer>()});
  const HyperParams fedopt_server{
      {"optimizer", std::string("momentum")},
      {"lr", 1.0},
      {"beta", 0.9},
      {"beta1", 0.9},
      {"beta2", 0.99},
      {"epsilon", 1e-3},
  };
  registry.register_algorithm({"fedopt", "Server optimizer on the pseudo-gradient", fedopt_server,
                               {}, client_factory<Client>(), server_factory<FedOptServer>()});
  registry.register_algorithm({"fedavgm", "FedOpt with server momentum", fedopt_server, {},
                               client_factory<Client>(), server_factory<FedOptServer>()});
}

}  // namespace flsim
