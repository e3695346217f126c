#include "flsim/comm.hpp"

#include <algorithm>

#include "flsim/error.hpp"

namespace flsim {

std::string ActorId::to_string() const {
  return is_server() ? std::string("server") : "client " + std::to_string(index);
}

std::uint64_t payload_size_bytes(const Payload& payload) {
  return kMessageHeaderBytes + kBytesPerElement * payload.tensors.element_count();
}

Message::Message(Payload payload, ActorId sender, ActorId receiver)
    : payload_(std::move(payload)),
      sender_(sender),
      receiver_(receiver),
      size_bytes_(payload_size_bytes(payload_)) {}

namespace {

std::uint64_t sum_where(const std::map<ActorId, std::uint64_t>& counters, bool servers) {
  std::uint64_t total = 0;
  for (const auto& [actor, bytes] : counters) {
    if (actor.is_server() == servers) total += bytes;
  }
  return total;
}

std::uint64_t sum_all(const std::map<ActorId, std::uint64_t>& counters) {
  std::uint64_t total = 0;
  for (const auto& [actor, bytes] : counters) total += bytes;
  return total;
}

}  // namespace

std::uint64_t RoundTraffic::bytes_down() const { return sum_where(bytes_sent, true); }
std::uint64_t RoundTraffic::bytes_up() const { return sum_where(bytes_sent, false); }

std::uint64_t TrafficLog::total_sent() const { return sum_all(totals.bytes_sent); }
std::uint64_t TrafficLog::total_received() const { return sum_all(totals.bytes_received); }

std::uint64_t TrafficLog::cumulative_down(int round) const {
  std::uint64_t total = 0;
  for (const auto& r : per_round) {
    if (r.round <= round) total += r.bytes_down();
  }
  return total;
}

std::uint64_t TrafficLog::cumulative_up(int round) const {
  std::uint64_t total = 0;
  for (const auto& r : per_round) {
    if (r.round <= round) total += r.bytes_up();
  }
  return total;
}

void Channel::register_actor(ActorId actor) {
  std::lock_guard lock(mutex_);
  mailboxes_.try_emplace(actor);
}

bool Channel::is_registered(ActorId actor) const {
  std::lock_guard lock(mutex_);
  return mailboxes_.contains(actor);
}

void Channel::begin_round(int round) {
  std::lock_guard lock(mutex_);
  round_ = round;
}

int Channel::current_round() const {
  std::lock_guard lock(mutex_);
  return round_;
}

RoundTraffic& Channel::bucket_locked() {
  auto& rounds = traffic_.per_round;
  if (rounds.empty() || rounds.back().round != round_) {
    auto it = std::find_if(rounds.begin(), rounds.end(),
                           [&](const RoundTraffic& r) { return r.round == round_; });
    if (it != rounds.end()) return *it;
    rounds.push_back(RoundTraffic{round_, {}, {}});
  }
  return rounds.back();
}

void Channel::send_locked(Message message) {
  auto box = mailboxes_.find(message.receiver());
  if (box == mailboxes_.end()) {
    throw UnregisteredActorError("send: receiver " + message.receiver().to_string() +
                                 " is not registered on the channel");
  }
  const std::uint64_t bytes = message.size_bytes();
  bucket_locked().bytes_sent[message.sender()] += bytes;
  traffic_.totals.bytes_sent[message.sender()] += bytes;
  box->second.push_back(std::move(message));
}

void Channel::send(Message message) {
  std::lock_guard lock(mutex_);
  send_locked(std::move(message));
}

Message Channel::receive(ActorId actor, std::optional<ActorId> from) {
  std::lock_guard lock(mutex_);
  auto box = mailboxes_.find(actor);
  if (box == mailboxes_.end()) {
    throw UnregisteredActorError("receive: " + actor.to_string() + " is not registered");
  }
  auto& queue = box->second;
  auto it = queue.begin();
  if (from) {
    it = std::find_if(queue.begin(), queue.end(),
                      [&](const Message& m) { return m.sender() == *from; });
  }
  if (it == queue.end()) {
    std::string what = "receive: no message for " + actor.to_string();
    if (from) what += " from " + from->to_string();
    throw NoMessageError(what);
  }
  Message message = std::move(*it);
  queue.erase(it);
  bucket_locked().bytes_received[actor] += message.size_bytes();
  traffic_.totals.bytes_received[actor] += message.size_bytes();
  return message;
}

void Channel::broadcast(const Payload& payload, ActorId sender,
                        const std::vector<ActorId>& recipients) {
  if (recipients.empty()) throw PreconditionError("broadcast: recipient list is empty");
  std::lock_guard lock(mutex_);
  for (ActorId recipient : recipients) {
    if (!mailboxes_.contains(recipient)) {
      throw UnregisteredActorError("broadcast: receiver " + recipient.to_string() +
                                   " is not registered on the channel");
    }
  }
  for (ActorId recipient : recipients) send_locked(Message(payload, sender, recipient));
}

std::size_t Channel::pending(ActorId actor) const {
  std::lock_guard lock(mutex_);
  auto box = mailboxes_.find(actor);
  return box == mailboxes_.end() ? 0 : box->second.size();
}

std::uint64_t Channel::pending_bytes() const {
  std::lock_guard lock(mutex_);
  std::uint64_t total = 0;
  for (const auto& [actor, queue] : mailboxes_) {
    for (const auto& m : queue) total += m.size_bytes();
  }
  return total;
}

TrafficLog Channel::traffic_report() const {
  std::lock_guard lock(mutex_);
  return traffic_;
}

}  // namespace flsim
