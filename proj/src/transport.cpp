#include "edgefleet/transport.hpp"

#include <algorithm>

#include "edgefleet/error.hpp"

namespace edgefleet {

namespace detail {

class SubscriptionQueue {
 public:
  explicit SubscriptionQueue(std::size_t capacity) : capacity_(capacity) {}

  /// Returns false if the queue was closed while waiting for space.
  bool push(Message message) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(message));
    not_empty_.notify_one();
    return true;
  }

  std::optional<Message> pop(std::optional<std::chrono::milliseconds> timeout) {
    std::unique_lock lock(mutex_);
    const auto ready = [&] { return closed_ || !items_.empty(); };
    if (timeout) {
      if (!not_empty_.wait_for(lock, *timeout, ready)) return std::nullopt;
    } else {
      not_empty_.wait(lock, ready);
    }
    return take(lock);
  }

  std::optional<Message> try_pop() {
    std::unique_lock lock(mutex_);
    return take(lock);
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::optional<Message> take(std::unique_lock<std::mutex>&) {
    if (items_.empty()) return std::nullopt;
    Message m = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return m;
  }

  mutable std::mutex mutex_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<Message> items_;
  std::size_t capacity_;
  bool closed_ = false;
};

struct BrokerState {
  struct Entry {
    std::uint64_t id;
    Topic pattern;
    std::shared_ptr<SubscriptionQueue> queue;
  };

  std::mutex mutex;
  std::mutex publish_mutex;  // keeps per-topic enqueue order across publishers
  std::map<std::string, std::uint64_t, std::less<>> sequence;
  std::vector<Entry> subscriptions;
  std::uint64_t next_id = 1;
  bool closed = false;

  void remove(std::uint64_t id) {
    std::lock_guard lock(mutex);
    std::erase_if(subscriptions, [id](const Entry& e) { return e.id == id; });
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------

Topic::Topic(std::string path) : path_(std::move(path)) {
  if (path_.empty()) throw Error(ErrorCode::kInvalidTopic, "empty topic");
  std::size_t start = 0;
  while (true) {
    const std::size_t slash = path_.find('/', start);
    std::string segment = path_.substr(start, slash == std::string::npos ? std::string::npos : slash - start);
    if (segment.empty()) throw Error(ErrorCode::kInvalidTopic, "empty segment in topic '" + path_ + "'");
    if (segment.find('#') != std::string::npos) {
      throw Error(ErrorCode::kInvalidTopic, "multi-level wildcard is not supported: '" + path_ + "'");
    }
    if (segment != "+" && segment.find('+') != std::string::npos) {
      throw Error(ErrorCode::kInvalidTopic, "'+' must occupy a whole segment: '" + path_ + "'");
    }
    segments_.push_back(std::move(segment));
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
}

bool Topic::has_wildcard() const {
  return std::find(segments_.begin(), segments_.end(), "+") != segments_.end();
}

bool Topic::matches(const Topic& topic) const {
  if (segments_.size() != topic.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i] != "+" && segments_[i] != topic.segments_[i]) return false;
  }
  return true;
}

namespace topics {
Topic sensor_readings(std::string_view room) { return Topic("sensors/" + std::string(room) + "/readings"); }
Topic sensor_telemetry(std::string_view room) { return Topic("sensors/" + std::string(room) + "/telemetry"); }
Topic device_control(std::string_view device) { return Topic("fleet/" + std::string(device) + "/control"); }
Topic device_drift(std::string_view device) { return Topic("fleet/" + std::string(device) + "/drift"); }
}  // namespace topics

// ---------------------------------------------------------------------------

Subscription::Subscription(std::shared_ptr<detail::SubscriptionQueue> queue,
                           std::weak_ptr<detail::BrokerState> broker, std::uint64_t id, Topic pattern)
    : queue_(std::move(queue)), broker_(std::move(broker)), id_(id), pattern_(std::move(pattern)) {}

Subscription::Subscription(Subscription&& other) noexcept
    : queue_(std::move(other.queue_)),
      broker_(std::move(other.broker_)),
      id_(std::exchange(other.id_, 0)),
      pattern_(other.pattern_) {}

Subscription& Subscription::operator=(Subscription&& other) noexcept {
  if (this != &other) {
    release();
    queue_ = std::move(other.queue_);
    broker_ = std::move(other.broker_);
    id_ = std::exchange(other.id_, 0);
    pattern_ = other.pattern_;
  }
  return *this;
}

Subscription::~Subscription() { release(); }

void Subscription::release() {
  if (id_ == 0) return;
  if (auto broker = broker_.lock()) broker->remove(id_);
  if (queue_) queue_->close();
  id_ = 0;
}

std::optional<Message> Subscription::receive() { return queue_ ? queue_->pop(std::nullopt) : std::nullopt; }

std::optional<Message> Subscription::receive_for(std::chrono::milliseconds timeout) {
  return queue_ ? queue_->pop(timeout) : std::nullopt;
}

std::optional<Message> Subscription::try_receive() { return queue_ ? queue_->try_pop() : std::nullopt; }

std::size_t Subscription::pending() const { return queue_ ? queue_->size() : 0; }

// ---------------------------------------------------------------------------

InMemoryBroker::InMemoryBroker(std::size_t queue_capacity)
    : state_(std::make_shared<detail::BrokerState>()), capacity_(std::max<std::size_t>(1, queue_capacity)) {}

InMemoryBroker::~InMemoryBroker() { close(); }

std::uint64_t InMemoryBroker::publish(const Topic& topic, std::string payload, Instant at) {
  if (topic.has_wildcard()) {
    throw Error(ErrorCode::kWildcardInPublish, "cannot publish to wildcard topic '" + topic.str() + "'");
  }
  std::lock_guard publish_lock(state_->publish_mutex);
  std::vector<std::shared_ptr<detail::SubscriptionQueue>> targets;
  std::uint64_t seq = 0;
  {
    std::lock_guard lock(state_->mutex);
    if (state_->closed) throw Error(ErrorCode::kBrokerClosed, "broker is closed");
    seq = ++state_->sequence[topic.str()];
    for (const auto& entry : state_->subscriptions) {
      if (entry.pattern.matches(topic)) targets.push_back(entry.queue);
    }
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    Message m{topic, i + 1 == targets.size() ? std::move(payload) : payload, at, seq};
    if (!targets[i]->push(std::move(m)) && closed()) {
      throw Error(ErrorCode::kBrokerClosed, "broker closed during publish");
    }
  }
  return seq;
}

Subscription InMemoryBroker::subscribe(const Topic& pattern) {
  std::lock_guard lock(state_->mutex);
  if (state_->closed) throw Error(ErrorCode::kBrokerClosed, "broker is closed");
  auto queue = std::make_shared<detail::SubscriptionQueue>(capacity_);
  const std::uint64_t id = state_->next_id++;
  state_->subscriptions.push_back({id, pattern, queue});
  return Subscription(queue, state_, id, pattern);
}

void InMemoryBroker::close() {
  std::vector<std::shared_ptr<detail::SubscriptionQueue>> queues;
  {
    std::lock_guard lock(state_->mutex);
    if (state_->closed) return;
    state_->closed = true;
    for (const auto& entry : state_->subscriptions) queues.push_back(entry.queue);
  }
  for (auto& q : queues) q->close();
}

bool InMemoryBroker::closed() const {
  std::lock_guard lock(state_->mutex);
  return state_->closed;
}

// ---------------------------------------------------------------------------

std::string encode_payload(const Payload& payload) {
  const auto check = [](std::string_view text) {
    if (text.find_first_of("\r\n") != std::string_view::npos) {
      throw Error(ErrorCode::kInvalidArgument, "payload text must not contain line breaks");
    }
  };
  check(payload.type);
  std::string out = "type:" + payload.type + "\n";
  for (const auto& [key, value] : payload.fields) {
    check(key);
    check(value);
    if (key.find(':') != std::string::npos) throw Error(ErrorCode::kInvalidArgument, "payload key contains ':'");
    out += key;
    out += ':';
    out += value;
    out += '\n';
  }
  return out;
}

Payload decode_payload(std::string_view bytes) {
  Payload p;
  bool first = true;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    std::size_t eol = bytes.find('\n', pos);
    if (eol == std::string_view::npos) eol = bytes.size();
    std::string_view line = bytes.substr(pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) throw Error(ErrorCode::kDecodeError, "payload line without ':'");
    std::string key(line.substr(0, colon));
    std::string value(line.substr(colon + 1));
    if (first) {
      if (key != "type") throw Error(ErrorCode::kDecodeError, "payload must start with a type line");
      p.type = std::move(value);
      first = false;
      continue;
    }
    p.fields.emplace_back(std::move(key), std::move(value));
  }
  if (first) throw Error(ErrorCode::kDecodeError, "empty payload");
  return p;
}

const std::string& payload_field(const Payload& payload, std::string_view key) {
  const std::string* value = find_field(payload.fields, key);
  if (value == nullptr) throw Error(ErrorCode::kDecodeError, "payload missing '" + std::string(key) + "'");
  return *value;
}

std::string encode_reading(const SensorReading& reading) {
  return encode_payload({"reading", to_field_map(reading)});
}

SensorReading decode_reading(std::string_view bytes) {
  const Payload p = decode_payload(bytes);
  if (p.type != "reading") throw Error(ErrorCode::kDecodeError, "expected a reading payload, got '" + p.type + "'");
  try {
    return parse_reading(p.fields);
  } catch (const Error& e) {
    throw Error(ErrorCode::kDecodeError, e.what());
  }
}

}  // namespace edgefleet
