#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "edgefleet/pipeline.hpp"
#include "edgefleet/text.hpp"
#include "edgefleet/time.hpp"

namespace edgefleet {

/// `/`-separated topic path. A segment equal to "+" is a single-level
/// wildcard; it may appear in subscription patterns but not in publish topics.
class Topic {
 public:
  /// Throws kInvalidTopic for empty paths, empty segments, or '#'/'+' mixed
  /// into a segment.
  explicit Topic(std::string path);

  const std::string& str() const { return path_; }
  const std::vector<std::string>& segments() const { return segments_; }
  bool has_wildcard() const;

  /// True when this (pattern) topic matches `topic` segment by segment.
  bool matches(const Topic& topic) const;

  bool operator==(const Topic& other) const { return path_ == other.path_; }
  bool operator<(const Topic& other) const { return path_ < other.path_; }

 private:
  std::string path_;
  std::vector<std::string> segments_;
};

namespace topics {
Topic sensor_readings(std::string_view room);
Topic sensor_telemetry(std::string_view room);
Topic device_control(std::string_view device);
Topic device_drift(std::string_view device);
}  // namespace topics

struct Message {
  Topic topic{"_"};
  std::string payload;
  Instant published_at{};
  std::uint64_t sequence_no = 0;  // per topic, starting at 1
};

namespace detail {
class SubscriptionQueue;
struct BrokerState;
}  // namespace detail

/// Consumer end of a subscription. Owned by a single consumer; unsubscribes
/// on destruction.
class Subscription {
 public:
  Subscription(std::shared_ptr<detail::SubscriptionQueue> queue, std::weak_ptr<detail::BrokerState> broker,
               std::uint64_t id, Topic pattern);
  Subscription(Subscription&&) noexcept;
  Subscription& operator=(Subscription&&) noexcept;
  Subscription(const Subscription&) = delete;
  Subscription& operator=(const Subscription&) = delete;
  ~Subscription();

  /// Blocks until a message arrives; nullopt once the broker is closed and
  /// the queue is drained.
  std::optional<Message> receive();
  std::optional<Message> receive_for(std::chrono::milliseconds timeout);
  std::optional<Message> try_receive();
  std::size_t pending() const;
  const Topic& pattern() const { return pattern_; }

 private:
  void release();

  std::shared_ptr<detail::SubscriptionQueue> queue_;
  std::weak_ptr<detail::BrokerState> broker_;
  std::uint64_t id_ = 0;
  Topic pattern_;
};

/// Seam for swapping the in-memory fabric for a real MQTT client. External
/// adapters are at-least-once: consumers must tolerate duplicate messages.
class MessageBus {
 public:
  virtual ~MessageBus() = default;
  virtual void connect() = 0;
  /// Returns the per-topic sequence number. Throws kWildcardInPublish,
  /// kBrokerClosed.
  virtual std::uint64_t publish(const Topic& topic, std::string payload, Instant at) = 0;
  virtual Subscription subscribe(const Topic& pattern) = 0;
  virtual void disconnect() = 0;
};

/// Exactly-once in-process broker. No retained messages: a subscription sees
/// only messages published after it was created. Subscriber queues are
/// bounded and a full queue blocks the publisher.
class InMemoryBroker final : public MessageBus {
 public:
  static constexpr std::size_t kDefaultQueueCapacity = 10'000;

  explicit InMemoryBroker(std::size_t queue_capacity = kDefaultQueueCapacity);
  ~InMemoryBroker() override;

  void connect() override {}
  std::uint64_t publish(const Topic& topic, std::string payload, Instant at) override;
  Subscription subscribe(const Topic& pattern) override;
  void disconnect() override { close(); }

  /// Wakes blocked publishers and receivers; later publish/subscribe calls
  /// throw kBrokerClosed.
  void close();
  bool closed() const;

 private:
  std::shared_ptr<detail::BrokerState> state_;
  std::size_t capacity_;
};

// Payload wire format: first line "type:<kind>", then "key:value" lines.
struct Payload {
  std::string type;
  FieldMap fields;
};

std::string encode_payload(const Payload& payload);
/// Throws kDecodeError.
Payload decode_payload(std::string_view bytes);
/// Throws kDecodeError when the field is absent.
const std::string& payload_field(const Payload& payload, std::string_view key);

std::string encode_reading(const SensorReading& reading);
SensorReading decode_reading(std::string_view bytes);

}  // namespace edgefleet
