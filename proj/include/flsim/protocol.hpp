#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "flsim/comm.hpp"
#include "flsim/data.hpp"
#include "flsim/evaluation.hpp"
#include "flsim/hyperparams.hpp"
#include "flsim/models.hpp"
#include "flsim/trainer.hpp"

namespace flsim {

// Uniform sample without replacement of max(1, round(rate * n_clients))
// client indices, returned in ascending order.
std::vector<std::size_t> select_clients(std::size_t n_clients, double rate, Rng& rng);
std::size_t selection_size(std::size_t n_clients, double rate);

// sum_c (w_c / sum w) * models[c]
ModelParams weighted_average(std::span<const ModelParams> models, std::span<const double> weights);

struct ClientSetup {
  std::uint32_t index = 0;
  Channel* channel = nullptr;
  DataView train;
  DataView test;  // may be empty
  ModelArchitecture arch;
  OptimizerSpec optimizer;
  LocalWorkSpec work;
  Rng rng;
  HyperParams hyperparams;
};

class Client {
 public:
  explicit Client(ClientSetup setup);
  virtual ~Client() = default;
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  ActorId id() const { return ActorId::client(index_); }
  std::uint32_t index() const { return index_; }
  std::size_t train_size() const { return train_.size(); }
  const DataView& train_data() const { return train_; }
  const DataView& test_data() const { return test_; }
  const ModelArchitecture& architecture() const { return trainer_.architecture(); }
  bool has_model() const { return !local_model_.empty(); }
  const ModelParams& local_model() const { return local_model_; }

  // Receive the global model, train on local data, send the result back.
  // Triggered by the server; carries no payload itself.
  virtual void local_training();
  // Called once after the last round.
  virtual void finalize() {}

  // Public so the single-client and baseline runners can reuse the exact
  // training path.
  virtual FitStats fit(ModelParams& params);

 protected:
  virtual ModelParams receive_model();
  virtual void send_model(const ModelParams& model);

  Channel& channel() { return *channel_; }
  LocalTrainer& trainer() { return trainer_; }
  const HyperParams& hyperparams() const { return hyperparams_; }

  ModelParams local_model_;

 private:
  std::uint32_t index_;
  Channel* channel_;
  DataView train_;
  DataView test_;
  LocalTrainer trainer_;
  HyperParams hyperparams_;
};

// One evaluation row of the round log.
struct RoundLogRow {
  int round = 0;
  EvalScope scope = EvalScope::kServerGlobal;
  Metrics metrics;
  std::size_t n_samples = 0;
  std::uint64_t bytes_down = 0;  // cumulative through `round`
  std::uint64_t bytes_up = 0;
};

struct FederationResult {
  std::vector<RoundLogRow> rows;
  TrafficLog traffic;
  std::vector<std::vector<std::size_t>> selections;  // per round, ascending
  ModelParams final_model;
};

struct EvaluationSetup {
  EvalSchedule schedule;
  EvalTarget target = EvalTarget::kServer;
  std::optional<DataView> server_test;
  bool client_weight_by_size = true;
};

struct ServerSetup {
  Channel* channel = nullptr;
  std::vector<std::unique_ptr<Client>> clients;
  ModelParams initial_model;
  ModelArchitecture arch;
  double eligibility = 1.0;
  Rng selection_rng;
  HyperParams hyperparams;
  bool weight_by_size = true;
  bool parallel_clients = false;
  EvaluationSetup evaluation;
};

// What the server collects from one client in a round.
struct ClientUpdate {
  std::size_t client = 0;
  ModelParams model;
  double weight = 1.0;
  ModelParams control;  // extra tensors, algorithm specific
};

class Server {
 public:
  explicit Server(ServerSetup setup);
  virtual ~Server() = default;
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Runs `rounds` synchronous rounds followed by finalize().
  FederationResult fit(int rounds);

  const ModelParams& global_model() const { return global_; }
  std::size_t client_count() const { return clients_.size(); }
  Client& client(std::size_t i) { return *clients_[i]; }
  int round() const { return round_; }

  // Invoked after every aggregation with the new global model.
  using RoundObserver = std::function<void(int round, const ModelParams& global)>;
  void set_round_observer(RoundObserver observer) { observer_ = std::move(observer); }

 protected:
  virtual std::vector<std::size_t> select_clients();
  virtual void broadcast_model(const std::vector<std::size_t>& selected);
  virtual ClientUpdate receive_update(std::size_t client);
  virtual ModelParams aggregate(const std::vector<ClientUpdate>& updates);
  virtual void finalize();

  void run_local_training(const std::vector<std::size_t>& selected);
  void evaluate(int round);
  std::vector<ActorId> actors(const std::vector<std::size_t>& selected) const;

  Channel& channel() { return *channel_; }
  const HyperParams& hyperparams() const { return hyperparams_; }
  int total_rounds() const { return total_rounds_; }
  std::vector<std::unique_ptr<Client>>& clients() { return clients_; }
  bool weight_by_size() const { return weight_by_size_; }

  ModelParams global_;

 private:
  Channel* channel_;
  std::vector<std::unique_ptr<Client>> clients_;
  ModelArchitecture arch_;
  double eligibility_;
  Rng selection_rng_;
  HyperParams hyperparams_;
  bool weight_by_size_;
  bool parallel_clients_;
  EvaluationSetup evaluation_;
  RoundObserver observer_;
  FederationResult result_;
  int round_ = 0;
  int total_rounds_ = 0;
  bool finalized_ = false;
};

// Typed wrappers over the channel for model payloads.
void send_model(Channel& channel, ActorId from, ActorId to, const ModelParams& model);
ModelParams receive_model(Channel& channel, ActorId actor, ActorId from);
void send_control(Channel& channel, ActorId from, ActorId to, const ModelParams& control);
ModelParams receive_control(Channel& channel, ActorId actor, ActorId from);

}  // namespace flsim
