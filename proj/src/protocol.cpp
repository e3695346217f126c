#include "flsim/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <future>
#include <numeric>

#include "flsim/error.hpp"
#include "flsim/kernels.hpp"

namespace flsim {

std::size_t selection_size(std::size_t n_clients, double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw PreconditionError("participation rate must be in (0, 1]");
  }
  const auto rounded = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n_clients)));
  return std::min(n_clients, std::max<std::size_t>(1, rounded));
}

std::vector<std::size_t> select_clients(std::size_t n_clients, double rate, Rng& rng) {
  const std::size_t count = selection_size(n_clients, rate);
  std::vector<std::size_t> pool(n_clients);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  // partial Fisher-Yates: the first `count` slots are the sample
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + rng.index(n_clients - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

ModelParams weighted_average(std::span<const ModelParams> models, std::span<const double> weights) {
  if (models.empty()) throw PreconditionError("aggregate: no models");
  if (models.size() != weights.size()) {
    throw PreconditionError("aggregate: " + std::to_string(models.size()) + " models but " +
                            std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw PreconditionError("aggregate: weights must be finite and non-negative");
    }
    total += w;
  }
  if (!(total > 0.0)) throw PreconditionError("aggregate: weights sum to zero");
  for (const auto& m : models) {
    if (!m.compatible_with(models.front())) {
      throw ShapeError("aggregate: client models have incompatible shapes");
    }
  }
  ModelParams out = models.front().zeros_like();
  for (std::size_t c = 0; c < models.size(); ++c) {
    const double share = weights[c] / total;
    for (std::size_t t = 0; t < out.tensor_count(); ++t) {
      kernels::axpy(share, models[c][t].values, out[t].values);
    }
  }
  return out;
}

void send_model(Channel& channel, ActorId from, ActorId to, const ModelParams& model) {
  channel.send(Message(Payload::model(model), from, to));
}

void send_control(Channel& channel, ActorId from, ActorId to, const ModelParams& control) {
  channel.send(Message(Payload::control(control), from, to));
}

namespace {

ModelParams take_tensors(Message message, PayloadKind expected, const char* what) {
  if (message.payload().kind != expected) {
    throw ProtocolError(std::string("expected a ") + what + " message from " +
                        message.sender().to_string());
  }
  return message.payload().tensors;
}

}  // namespace

ModelParams receive_model(Channel& channel, ActorId actor, ActorId from) {
  return take_tensors(channel.receive(actor, from), PayloadKind::kModel, "model");
}

ModelParams receive_control(Channel& channel, ActorId actor, ActorId from) {
  return take_tensors(channel.receive(actor, from), PayloadKind::kControl, "control");
}

Client::Client(ClientSetup setup)
    : index_(setup.index),
      channel_(setup.channel),
      train_(std::move(setup.train)),
      test_(std::move(setup.test)),
      trainer_(std::move(setup.arch), setup.optimizer, setup.work, std::move(setup.rng)),
      hyperparams_(std::move(setup.hyperparams)) {
  if (channel_ == nullptr) throw PreconditionError("client needs a channel");
  if (train_.empty()) {
    throw PreconditionError("client " + std::to_string(index_) + " has an empty training set");
  }
  channel_->register_actor(id());
}

void Client::local_training() {
  ModelParams params = receive_model();
  trainer_.reset_optimizer();
  fit(params);
  local_model_ = std::move(params);
  send_model(local_model_);
}

FitStats Client::fit(ModelParams& params) { return trainer_.fit(params, train_); }

ModelParams Client::receive_model() {
  return flsim::receive_model(*channel_, id(), ActorId::server());
}

void Client::send_model(const ModelParams& model) {
  flsim::send_model(*channel_, id(), ActorId::server(), model);
}

Server::Server(ServerSetup setup)
    : global_(std::move(setup.initial_model)),
      channel_(setup.channel),
      clients_(std::move(setup.clients)),
      arch_(std::move(setup.arch)),
      eligibility_(setup.eligibility),
      selection_rng_(std::move(setup.selection_rng)),
      hyperparams_(std::move(setup.hyperparams)),
      weight_by_size_(setup.weight_by_size),
      parallel_clients_(setup.parallel_clients),
      evaluation_(std::move(setup.evaluation)) {
  if (channel_ == nullptr) throw PreconditionError("server needs a channel");
  if (!(eligibility_ > 0.0 && eligibility_ <= 1.0)) {
    throw PreconditionError("eligibility must be in (0, 1]");
  }
  evaluation_.schedule.validate();
  channel_->register_actor(ActorId::server());
}

FederationResult Server::fit(int rounds) {
  if (rounds < 0) throw PreconditionError("number of rounds must be >= 0");
  if (clients_.empty()) throw PreconditionError("server_fit: no clients registered");
  if (global_.empty()) throw PreconditionError("server_fit: global model is not initialized");
  if (finalized_) throw ProtocolError("server_fit: this federation already ran");
  total_rounds_ = rounds;
  result_ = FederationResult{};

  for (int t = 1; t <= rounds; ++t) {
    round_ = t;
    channel_->begin_round(t);
    auto selected = select_clients();
    result_.selections.push_back(selected);
    broadcast_model(selected);
    run_local_training(selected);

    std::vector<ClientUpdate> updates;
    updates.reserve(selected.size());
    for (std::size_t c : selected) updates.push_back(receive_update(c));
    if (channel_->pending(ActorId::server()) != 0) {
      throw ProtocolError("round " + std::to_string(t) +
                          ": unexpected extra messages left in the server mailbox");
    }
    global_ = aggregate(updates);
    if (observer_) observer_(t, global_);
    if (t < rounds && evaluation_.schedule.due(t, rounds)) evaluate(t);
  }
  finalize();
  result_.final_model = global_;
  result_.traffic = channel_->traffic_report();
  return std::move(result_);
}

std::vector<std::size_t> Server::select_clients() {
  return flsim::select_clients(clients_.size(), eligibility_, selection_rng_);
}

std::vector<ActorId> Server::actors(const std::vector<std::size_t>& selected) const {
  std::vector<ActorId> out;
  out.reserve(selected.size());
  for (std::size_t c : selected) out.push_back(clients_[c]->id());
  return out;
}

void Server::broadcast_model(const std::vector<std::size_t>& selected) {
  channel_->broadcast(Payload::model(global_), ActorId::server(), actors(selected));
}

void Server::run_local_training(const std::vector<std::size_t>& selected) {
  if (!parallel_clients_ || selected.size() < 2) {
    for (std::size_t c : selected) clients_[c]->local_training();
    return;
  }
  std::vector<std::future<void>> pending;
  pending.reserve(selected.size());
  for (std::size_t c : selected) {
    pending.push_back(std::async(std::launch::async, [this, c] { clients_[c]->local_training(); }));
  }
  // round barrier: every selected client finishes before aggregation
  std::exception_ptr first_error;
  for (auto& f : pending) {
    try {
      f.get();
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

ClientUpdate Server::receive_update(std::size_t client) {
  ClientUpdate update;
  update.client = client;
  update.weight = weight_by_size_ ? static_cast<double>(clients_[client]->train_size()) : 1.0;
  try {
    update.model = receive_model(*channel_, ActorId::server(), clients_[client]->id());
  } catch (const NoMessageError&) {
    throw ProtocolError("round " + std::to_string(round_) + ": " +
                        clients_[client]->id().to_string() + " did not return a model");
  }
  return update;
}

ModelParams Server::aggregate(const std::vector<ClientUpdate>& updates) {
  std::vector<ModelParams> models;
  std::vector<double> weights;
  models.reserve(updates.size());
  for (const auto& u : updates) {
    models.push_back(u.model);
    weights.push_back(u.weight);
  }
  return weighted_average(models, weights);
}

void Server::finalize() {
  if (finalized_) return;
  finalized_ = true;
  for (auto& client : clients_) client->finalize();
  evaluate(total_rounds_);
}

void Server::evaluate(int round) {
  const TrafficLog traffic = channel_->traffic_report();
  auto push = [&](const MetricsReport& report) {
    result_.rows.push_back(RoundLogRow{report.round, report.scope, report.metrics,
                                       report.n_samples, traffic.cumulative_down(round),
                                       traffic.cumulative_up(round)});
  };
  const bool want_server = evaluation_.target != EvalTarget::kClients;
  const bool want_clients = evaluation_.target != EvalTarget::kServer;
  if (want_server && evaluation_.server_test && !evaluation_.server_test->empty()) {
    push(evaluate_model(arch_, global_, *evaluation_.server_test, round, EvalScope::kServerGlobal));
  }
  if (want_clients) {
    std::vector<MetricsReport> reports;
    for (const auto& client : clients_) {
      if (client->test_data().empty()) continue;
      const ModelParams& model = client->has_model() ? client->local_model() : global_;
      reports.push_back(
          evaluate_model(arch_, model, client->test_data(), round, EvalScope::kClientMean));
    }
    if (!reports.empty()) {
      push(combine_client_reports(reports, round, evaluation_.client_weight_by_size));
    }
  }
}

}  // namespace flsim
