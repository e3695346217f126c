#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "flsim/params.hpp"

namespace flsim {

struct ActorId {
  enum class Kind { kServer, kClient };

  Kind kind = Kind::kServer;
  std::uint32_t index = 0;  // meaningful for clients only

  static constexpr ActorId server() { return ActorId{Kind::kServer, 0}; }
  static constexpr ActorId client(std::uint32_t i) { return ActorId{Kind::kClient, i}; }

  bool is_server() const { return kind == Kind::kServer; }
  std::string to_string() const;

  auto operator<=>(const ActorId&) const = default;
};

enum class PayloadKind { kModel, kControl, kSignal };

enum class Signal { kNone, kFinalize, kAck };

// What travels through the channel. Model and control payloads carry named
// tensors; signal payloads carry only a tag.
struct Payload {
  PayloadKind kind = PayloadKind::kSignal;
  ModelParams tensors;
  Signal signal = Signal::kNone;

  static Payload model(ModelParams params) {
    return Payload{PayloadKind::kModel, std::move(params), Signal::kNone};
  }
  static Payload control(ModelParams params) {
    return Payload{PayloadKind::kControl, std::move(params), Signal::kNone};
  }
  static Payload make_signal(Signal tag) { return Payload{PayloadKind::kSignal, {}, tag}; }
};

inline constexpr std::uint64_t kMessageHeaderBytes = 64;
inline constexpr std::uint64_t kBytesPerElement = 8;

// 8 bytes per tensor element plus a fixed 64-byte header.
std::uint64_t payload_size_bytes(const Payload& payload);

class Message {
 public:
  Message(Payload payload, ActorId sender, ActorId receiver);

  const Payload& payload() const { return payload_; }
  ActorId sender() const { return sender_; }
  ActorId receiver() const { return receiver_; }
  std::uint64_t size_bytes() const { return size_bytes_; }

 private:
  Payload payload_;
  ActorId sender_;
  ActorId receiver_;
  std::uint64_t size_bytes_;
};

struct RoundTraffic {
  int round = 0;
  std::map<ActorId, std::uint64_t> bytes_sent;
  std::map<ActorId, std::uint64_t> bytes_received;

  // Bytes sent by the server / by any client.
  std::uint64_t bytes_down() const;
  std::uint64_t bytes_up() const;
};

struct TrafficLog {
  std::vector<RoundTraffic> per_round;
  RoundTraffic totals;

  std::uint64_t total_sent() const;
  std::uint64_t total_received() const;
  // Cumulative server-sent / client-sent bytes through `round` inclusive.
  std::uint64_t cumulative_down(int round) const;
  std::uint64_t cumulative_up(int round) const;
};

// In-process message bus between the server and its clients. Every
// operation takes the internal lock, so clients training on separate threads
// may share one channel.
class Channel {
 public:
  Channel() = default;
  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  void register_actor(ActorId actor);
  bool is_registered(ActorId actor) const;

  // Starts a new traffic bucket; later traffic is attributed to `round`.
  void begin_round(int round);
  int current_round() const;

  void send(Message message);
  // Oldest message for `actor`, optionally only from `from`.
  Message receive(ActorId actor, std::optional<ActorId> from = std::nullopt);
  // One independent copy per recipient; traffic accrues per recipient.
  void broadcast(const Payload& payload, ActorId sender, const std::vector<ActorId>& recipients);

  std::size_t pending(ActorId actor) const;
  std::uint64_t pending_bytes() const;

  TrafficLog traffic_report() const;

 private:
  RoundTraffic& bucket_locked();
  void send_locked(Message message);

  mutable std::mutex mutex_;
  std::map<ActorId, std::deque<Message>> mailboxes_;
  TrafficLog traffic_;
  int round_ = 0;
};

}  // namespace flsim
