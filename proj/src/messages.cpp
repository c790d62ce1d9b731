#include "edgefleet/messages.hpp"

#include <cmath>

#include "edgefleet/error.hpp"
#include "edgefleet/transport.hpp"

namespace edgefleet {

namespace {

std::uint64_t decode_version(const Payload& p) {
  const auto v = parse_int(payload_field(p, "model_version"));
  if (!v || *v < 0) throw Error(ErrorCode::kDecodeError, "bad model_version");
  return static_cast<std::uint64_t>(*v);
}

}  // namespace

bool drift_triggered(double daily_rmse, std::size_t n_evaluated, double threshold, std::size_t min_samples) {
  if (n_evaluated < min_samples || std::isnan(daily_rmse)) return false;
  return daily_rmse >= threshold;
}

std::string encode_drift(const DriftReport& r) {
  return encode_payload({"drift",
                         {{"rmse", format_double(r.daily_rmse)},
                          {"triggered", r.triggered ? "true" : "false"},
                          {"model_version", std::to_string(r.model_version.value)},
                          {"device", r.device_id},
                          {"room", r.room},
                          {"evaluated_at", format_rfc3339(r.evaluated_at)},
                          {"window_start", format_rfc3339(r.window_start)},
                          {"window_end", format_rfc3339(r.window_end)},
                          {"n_evaluated", std::to_string(r.n_evaluated)}}});
}

DriftReport decode_drift(std::string_view bytes) {
  const Payload p = decode_payload(bytes);
  if (p.type != "drift") throw Error(ErrorCode::kDecodeError, "expected a drift payload");
  DriftReport r;
  const auto rmse = parse_double(payload_field(p, "rmse"));
  if (!rmse) throw Error(ErrorCode::kDecodeError, "bad rmse");
  r.daily_rmse = *rmse;
  const std::string& triggered = payload_field(p, "triggered");
  if (triggered != "true" && triggered != "false") throw Error(ErrorCode::kDecodeError, "bad triggered flag");
  r.triggered = triggered == "true";
  r.model_version = ModelVersion{decode_version(p)};
  r.device_id = payload_field(p, "device");
  r.room = payload_field(p, "room");
  try {
    r.evaluated_at = parse_rfc3339(payload_field(p, "evaluated_at"));
    r.window_start = parse_rfc3339(payload_field(p, "window_start"));
    r.window_end = parse_rfc3339(payload_field(p, "window_end"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kDecodeError) throw;
    throw Error(ErrorCode::kDecodeError, e.what());
  }
  const auto n = parse_int(payload_field(p, "n_evaluated"));
  if (!n || *n < 0) throw Error(ErrorCode::kDecodeError, "bad n_evaluated");
  r.n_evaluated = static_cast<std::size_t>(*n);
  return r;
}

std::string encode_control(const ControlCommand& c) {
  return encode_payload({"control", {{"command", c.command}, {"model_version", std::to_string(c.model_version.value)}}});
}

ControlCommand decode_control(std::string_view bytes) {
  const Payload p = decode_payload(bytes);
  if (p.type != "control") throw Error(ErrorCode::kDecodeError, "expected a control payload");
  ControlCommand c;
  c.command = payload_field(p, "command");
  c.model_version = ModelVersion{decode_version(p)};
  return c;
}

}  // namespace edgefleet
