#include "edgefleet/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "edgefleet/edge_agent.hpp"
#include "edgefleet/error.hpp"
#include "edgefleet/transport.hpp"

namespace edgefleet {

namespace fs = std::filesystem;

namespace {

std::string default_device(const std::string& room) {
  if (room == "A10") return "jetson-nano";
  if (room == "A29") return "raspberry-pi";
  if (room == "A30") return "edge-tpu";
  return "edge-" + room;
}

void reseed(ScenarioSeeds& seeds, std::uint64_t base) {
  seeds.generator = derive_seed(base, 1);
  seeds.training = derive_seed(base, 2);
  seeds.telemetry = derive_seed(base, 3);
  seeds.corruption = derive_seed(base, 4);
}

[[noreturn]] void config_error(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kConfigError, "line " + std::to_string(line) + ": " + what);
}

double to_double(std::size_t line, const std::string& key, const std::string& value) {
  const auto v = parse_double(value);
  if (!v || !std::isfinite(*v)) config_error(line, "'" + key + "' needs a number, got '" + value + "'");
  return *v;
}

long long to_int(std::size_t line, const std::string& key, const std::string& value) {
  const auto v = parse_int(value);
  if (!v) config_error(line, "'" + key + "' needs an integer, got '" + value + "'");
  return *v;
}

std::uint64_t to_u64(std::size_t line, const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) config_error(line, "'" + key + "' needs an unsigned integer");
  return out;
}

bool to_bool(std::size_t line, const std::string& key, const std::string& value) {
  if (value == "true" || value == "yes" || value == "1") return true;
  if (value == "false" || value == "no" || value == "0") return false;
  config_error(line, "'" + key + "' needs true or false");
}

Duration parse_time_of_day(std::size_t line, const std::string& value) {
  int h = 0;
  int m = 0;
  char colon = 0;
  std::istringstream in(value);
  if (!(in >> h >> colon >> m) || colon != ':' || h < 0 || h > 23 || m < 0 || m > 59 || !in.eof()) {
    config_error(line, "daily_trigger needs HH:MM, got '" + value + "'");
  }
  return std::chrono::hours(h) + std::chrono::minutes(m);
}

RegimeShift parse_shift(std::size_t line, const std::string& value, Instant start) {
  RegimeShift shift;
  bool placed = false;
  std::istringstream in(value);
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) config_error(line, "shift token '" + token + "' is not key=value");
    const std::string k = token.substr(0, eq);
    const std::string v = token.substr(eq + 1);
    if (k == "day") {
      const double days = to_double(line, k, v);
      shift.at = start + Duration(static_cast<std::int64_t>(std::llround(days * static_cast<double>(kDay.count()))));
      placed = true;
    } else if (k == "at") {
      try {
        shift.at = parse_rfc3339(v);
      } catch (const Error& e) {
        config_error(line, e.what());
      }
      placed = true;
    } else if (k == "aqi") {
      shift.aqi_offset = to_double(line, k, v);
    } else if (k == "humidity") {
      shift.humidity_offset = to_double(line, k, v);
    } else if (k == "temperature") {
      shift.temperature_offset = to_double(line, k, v);
    } else if (k == "gain") {
      shift.gain_scale = to_double(line, k, v);
    } else if (k == "ramp_hours") {
      shift.ramp = Duration(static_cast<std::int64_t>(std::llround(to_double(line, k, v) * 3'600'000.0)));
    } else {
      config_error(line, "unknown shift key '" + k + "'");
    }
  }
  if (!placed) config_error(line, "shift needs day= or at=");
  return shift;
}

bool set_profile_key(RoomSetup& room, const std::string& key, const std::string& value, std::size_t line,
                     Instant start) {
  RoomProfile& p = room.profile;
  if (key == "device") {
    room.device_id = value;
    return true;
  }
  if (key == "room_type") {
    p.room_type = value;
    return true;
  }
  if (key == "floor") {
    p.floor = value;
    return true;
  }
  if (key == "sensor_name") {
    p.sensor_name = value;
    return true;
  }
  if (key == "shift") {
    p.regime_shifts.push_back(parse_shift(line, value, start));
    return true;
  }
  const std::pair<const char*, double RoomProfile::*> numeric[] = {
      {"base_aqi", &RoomProfile::base_aqi},
      {"daily_amplitude", &RoomProfile::daily_amplitude},
      {"noise_std", &RoomProfile::noise_std},
      {"occupancy_spike_rate", &RoomProfile::occupancy_spike_rate},
      {"weekend_factor", &RoomProfile::weekend_factor},
      {"occupancy_gain", &RoomProfile::occupancy_gain},
      {"pollutant_response", &RoomProfile::pollutant_response},
      {"process_noise_share", &RoomProfile::process_noise_share},
      {"base_humidity", &RoomProfile::base_humidity},
      {"humidity_per_occupancy", &RoomProfile::humidity_per_occupancy},
      {"temperature_per_occupancy", &RoomProfile::temperature_per_occupancy},
      {"light_per_occupancy", &RoomProfile::light_per_occupancy},
      {"daylight_peak", &RoomProfile::daylight_peak},
  };
  for (const auto& [name, member] : numeric) {
    if (key == name) {
      p.*member = to_double(line, key, value);
      return true;
    }
  }
  return false;
}

bool set_training_key(TrainConfig& t, const std::string& key, const std::string& value, std::size_t line) {
  if (key == "mlr.damping") t.mlr_damping = to_double(line, key, value);
  else if (key == "svr.epsilon") t.svr.epsilon = to_double(line, key, value);
  else if (key == "svr.c") t.svr.c = to_double(line, key, value);
  else if (key == "svr.epochs") t.svr.epochs = static_cast<int>(to_int(line, key, value));
  else if (key == "svr.learning_rate") t.svr.learning_rate = to_double(line, key, value);
  else if (key == "elm.hidden") t.elm.hidden = static_cast<int>(to_int(line, key, value));
  else if (key == "elm.ridge") t.elm.ridge = to_double(line, key, value);
  else if (key == "rfr.trees") t.forest.trees = static_cast<int>(to_int(line, key, value));
  else if (key == "rfr.max_depth") t.forest.max_depth = static_cast<int>(to_int(line, key, value));
  else if (key == "rfr.min_leaf") t.forest.min_leaf = static_cast<int>(to_int(line, key, value));
  else if (key == "rfr.feature_subset") t.forest.feature_subset = static_cast<int>(to_int(line, key, value));
  else if (key == "rfr.max_bins") t.forest.max_bins = static_cast<int>(to_int(line, key, value));
  else return false;
  return true;
}

std::string seconds_text(Duration d) { return format_double(static_cast<double>(d.count()) / 1000.0); }

Duration from_seconds(std::size_t line, const std::string& key, const std::string& value) {
  const double s = to_double(line, key, value);
  return Duration(static_cast<std::int64_t>(std::llround(s * 1000.0)));
}

}  // namespace

ScenarioConfig default_scenario(std::uint64_t seed) {
  ScenarioConfig c;
  for (const char* room : {"A10", "A29", "A30"}) c.rooms.push_back({default_profile(room), default_device(room)});
  reseed(c.seeds, seed);
  return c;
}

void add_default_shifts(ScenarioConfig& config, const std::vector<double>& day_offsets) {
  for (std::size_t i = 0; i < config.rooms.size(); ++i) {
    const double day = day_offsets.empty() ? 14.0 : day_offsets[std::min(i, day_offsets.size() - 1)];
    RegimeShift shift;
    shift.at = config.start + Duration(static_cast<std::int64_t>(std::llround(day * static_cast<double>(kDay.count()))));
    shift.aqi_offset = -40.0;
    shift.humidity_offset = -10.0;
    config.rooms[i].profile.regime_shifts.push_back(shift);
  }
}

Instant scenario_end(const ScenarioConfig& config) { return config.start + std::chrono::days(config.duration_days); }

ScenarioConfig parse_scenario_config(std::istream& in, std::optional<std::uint64_t> default_seed) {
  ScenarioConfig c;
  c.rooms.clear();
  reseed(c.seeds, default_seed.value_or(42));
  RoomSetup* room = nullptr;
  std::string raw;
  std::size_t line_no = 0;
  // Shift lines may use day= offsets, which depend on `start`; resolve them
  // after the whole file is read.
  struct PendingShift {
    std::size_t room;
    std::size_t line;
    std::string value;
  };
  std::vector<PendingShift> shifts;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view text = raw;
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;

    if (text.front() == '[') {
      if (text.back() != ']') config_error(line_no, "unterminated section header");
      std::istringstream header(std::string(text.substr(1, text.size() - 2)));
      std::string kind;
      std::string id;
      std::string extra;
      header >> kind >> id;
      if (kind != "room" || id.empty() || (header >> extra)) config_error(line_no, "expected [room <id>]");
      for (const auto& r : c.rooms) {
        if (r.profile.room == id) config_error(line_no, "room " + id + " declared twice");
      }
      c.rooms.push_back({default_profile(id), default_device(id)});
      room = &c.rooms.back();
      continue;
    }

    const auto eq = text.find('=');
    if (eq == std::string_view::npos) config_error(line_no, "expected key = value");
    const std::string key(trim(text.substr(0, eq)));
    const std::string value(trim(text.substr(eq + 1)));
    if (key.empty()) config_error(line_no, "empty key");

    if (room != nullptr) {
      if (key == "shift") {
        shifts.push_back({c.rooms.size() - 1, line_no, value});
        continue;
      }
      if (!set_profile_key(*room, key, value, line_no, c.start)) config_error(line_no, "unknown room key '" + key + "'");
      continue;
    }

    if (key == "seed") {
      reseed(c.seeds, to_u64(line_no, key, value));
    } else if (key == "seed.generator") {
      c.seeds.generator = to_u64(line_no, key, value);
    } else if (key == "seed.training") {
      c.seeds.training = to_u64(line_no, key, value);
    } else if (key == "seed.telemetry") {
      c.seeds.telemetry = to_u64(line_no, key, value);
    } else if (key == "seed.corruption") {
      c.seeds.corruption = to_u64(line_no, key, value);
    } else if (key == "start") {
      try {
        c.start = parse_rfc3339(value);
      } catch (const Error& e) {
        config_error(line_no, e.what());
      }
    } else if (key == "duration_days") {
      c.duration_days = static_cast<int>(to_int(line_no, key, value));
    } else if (key == "history_days") {
      c.history_days = static_cast<int>(to_int(line_no, key, value));
    } else if (key == "sampling_interval_minutes") {
      if (to_double(line_no, key, value) != 5.0) config_error(line_no, "only a 5-minute sampling interval is supported");
    } else if (key == "drift_threshold") {
      c.drift_threshold = to_double(line_no, key, value);
    } else if (key == "min_drift_samples") {
      c.min_drift_samples = static_cast<std::size_t>(std::max(0LL, to_int(line_no, key, value)));
    } else if (key == "aqi_alert_threshold") {
      c.aqi_alert_threshold = to_double(line_no, key, value);
    } else if (key == "retrain_window_days") {
      c.retrain_window_days = static_cast<int>(to_int(line_no, key, value));
    } else if (key == "retrain_min_examples") {
      c.retrain_min_examples = static_cast<std::size_t>(std::max(0LL, to_int(line_no, key, value)));
    } else if (key == "cv_folds") {
      c.cv_folds = static_cast<std::size_t>(std::max(0LL, to_int(line_no, key, value)));
    } else if (key == "daily_trigger") {
      c.daily_trigger_offset = parse_time_of_day(line_no, value);
    } else if (key == "telemetry_interval_seconds") {
      c.telemetry_interval = from_seconds(line_no, key, value);
    } else if (key == "silence_intervals") {
      c.silence_intervals = static_cast<int>(to_int(line_no, key, value));
    } else if (key == "deploy_latency_seconds") {
      c.deploy_latency = from_seconds(line_no, key, value);
    } else if (key == "corrupt_rate") {
      c.corrupt_rate = to_double(line_no, key, value);
    } else if (key == "time_acceleration") {
      c.time_acceleration = to_double(line_no, key, value);
    } else if (key == "parallel_training") {
      c.parallel_training = to_bool(line_no, key, value);
    } else if (!set_training_key(c.training, key, value, line_no)) {
      config_error(line_no, "unknown key '" + key + "'");
    }
  }

  for (const auto& s : shifts) c.rooms[s.room].profile.regime_shifts.push_back(parse_shift(s.line, s.value, c.start));
  if (c.rooms.empty()) {
    for (const char* r : {"A10", "A29", "A30"}) c.rooms.push_back({default_profile(r), default_device(r)});
  }
  validate(c);
  return c;
}

ScenarioConfig load_scenario_config(const fs::path& path, std::optional<std::uint64_t> default_seed) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot open config " + path.string());
  return parse_scenario_config(in, default_seed);
}

std::string render_scenario_config(const ScenarioConfig& c) {
  std::ostringstream out;
  out << "start = " << format_rfc3339(c.start) << '\n';
  out << "duration_days = " << c.duration_days << '\n';
  out << "history_days = " << c.history_days << '\n';
  out << "sampling_interval_minutes = 5\n";
  out << "drift_threshold = " << format_double(c.drift_threshold) << '\n';
  out << "min_drift_samples = " << c.min_drift_samples << '\n';
  out << "aqi_alert_threshold = " << format_double(c.aqi_alert_threshold) << '\n';
  out << "retrain_window_days = " << c.retrain_window_days << '\n';
  out << "retrain_min_examples = " << c.retrain_min_examples << '\n';
  out << "cv_folds = " << c.cv_folds << '\n';
  const auto minutes = std::chrono::duration_cast<std::chrono::minutes>(c.daily_trigger_offset).count();
  char trigger[8];
  std::snprintf(trigger, sizeof trigger, "%02d:%02d", static_cast<int>(minutes / 60), static_cast<int>(minutes % 60));
  out << "daily_trigger = " << trigger << '\n';
  out << "telemetry_interval_seconds = " << seconds_text(c.telemetry_interval) << '\n';
  out << "silence_intervals = " << c.silence_intervals << '\n';
  out << "deploy_latency_seconds = " << seconds_text(c.deploy_latency) << '\n';
  out << "corrupt_rate = " << format_double(c.corrupt_rate) << '\n';
  out << "time_acceleration = " << format_double(c.time_acceleration) << '\n';
  out << "parallel_training = " << (c.parallel_training ? "true" : "false") << '\n';
  out << "seed.generator = " << c.seeds.generator << '\n';
  out << "seed.training = " << c.seeds.training << '\n';
  out << "seed.telemetry = " << c.seeds.telemetry << '\n';
  out << "seed.corruption = " << c.seeds.corruption << '\n';
  const TrainConfig& t = c.training;
  out << "mlr.damping = " << format_double(t.mlr_damping) << '\n';
  out << "svr.epsilon = " << format_double(t.svr.epsilon) << '\n';
  out << "svr.c = " << format_double(t.svr.c) << '\n';
  out << "svr.epochs = " << t.svr.epochs << '\n';
  out << "svr.learning_rate = " << format_double(t.svr.learning_rate) << '\n';
  out << "elm.hidden = " << t.elm.hidden << '\n';
  out << "elm.ridge = " << format_double(t.elm.ridge) << '\n';
  out << "rfr.trees = " << t.forest.trees << '\n';
  out << "rfr.max_depth = " << t.forest.max_depth << '\n';
  out << "rfr.min_leaf = " << t.forest.min_leaf << '\n';
  out << "rfr.feature_subset = " << t.forest.feature_subset << '\n';
  out << "rfr.max_bins = " << t.forest.max_bins << '\n';
  for (const auto& room : c.rooms) {
    const RoomProfile& p = room.profile;
    out << "\n[room " << p.room << "]\n";
    out << "device = " << room.device_id << '\n';
    out << "room_type = " << p.room_type << '\n';
    out << "floor = " << p.floor << '\n';
    if (!p.sensor_name.empty()) out << "sensor_name = " << p.sensor_name << '\n';
    out << "base_aqi = " << format_double(p.base_aqi) << '\n';
    out << "daily_amplitude = " << format_double(p.daily_amplitude) << '\n';
    out << "noise_std = " << format_double(p.noise_std) << '\n';
    out << "occupancy_spike_rate = " << format_double(p.occupancy_spike_rate) << '\n';
    out << "weekend_factor = " << format_double(p.weekend_factor) << '\n';
    out << "occupancy_gain = " << format_double(p.occupancy_gain) << '\n';
    out << "pollutant_response = " << format_double(p.pollutant_response) << '\n';
    out << "process_noise_share = " << format_double(p.process_noise_share) << '\n';
    out << "base_humidity = " << format_double(p.base_humidity) << '\n';
    out << "humidity_per_occupancy = " << format_double(p.humidity_per_occupancy) << '\n';
    out << "temperature_per_occupancy = " << format_double(p.temperature_per_occupancy) << '\n';
    out << "light_per_occupancy = " << format_double(p.light_per_occupancy) << '\n';
    out << "daylight_peak = " << format_double(p.daylight_peak) << '\n';
    for (const auto& s : p.regime_shifts) {
      out << "shift = at=" << format_rfc3339(s.at) << " aqi=" << format_double(s.aqi_offset)
          << " humidity=" << format_double(s.humidity_offset) << " temperature=" << format_double(s.temperature_offset)
          << " gain=" << format_double(s.gain_scale)
          << " ramp_hours=" << format_double(static_cast<double>(s.ramp.count()) / 3'600'000.0) << '\n';
    }
  }
  return out.str();
}

void validate(const ScenarioConfig& c) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfigError, what); };
  if (c.rooms.empty()) fail("no rooms configured");
  if (c.duration_days <= 0) fail("duration_days must be positive");
  if (c.history_days <= 0) fail("history_days must be positive");
  if (!(c.drift_threshold > 0.0)) fail("drift_threshold must be positive");
  if (!(c.aqi_alert_threshold > 0.0)) fail("aqi_alert_threshold must be positive");
  if (c.retrain_window_days <= 0) fail("retrain_window_days must be positive");
  if (c.cv_folds < 2) fail("cv_folds must be at least 2");
  if (c.telemetry_interval <= Duration::zero()) fail("telemetry_interval_seconds must be positive");
  if (c.silence_intervals <= 0) fail("silence_intervals must be positive");
  if (c.deploy_latency < Duration::zero() || c.deploy_latency >= kDay) fail("deploy_latency_seconds must be in [0, 86400)");
  if (!(c.corrupt_rate >= 0.0 && c.corrupt_rate < 1.0)) fail("corrupt_rate must be in [0, 1)");
  if (!(c.time_acceleration >= 0.0)) fail("time_acceleration must be >= 0");
  std::set<std::string> rooms;
  std::set<std::string> devices;
  for (const auto& r : c.rooms) {
    const auto bad = [](const std::string& id) {
      return id.empty() || id.find_first_of("/+#,;= \t\\") != std::string::npos;
    };
    if (bad(r.profile.room)) fail("invalid room id '" + r.profile.room + "'");
    if (bad(r.device_id)) fail("invalid device id '" + r.device_id + "' for room " + r.profile.room);
    if (!rooms.insert(r.profile.room).second) fail("duplicate room " + r.profile.room);
    if (!devices.insert(r.device_id).second) fail("device " + r.device_id + " serves two rooms");
    if (!(r.profile.noise_std >= 0.0) || !(r.profile.occupancy_spike_rate >= 0.0)) {
      fail("room " + r.profile.room + ": noise_std and occupancy_spike_rate must be >= 0");
    }
  }
}

std::optional<Period> run_period(const RunLayout& layout) {
  const fs::path path = layout.root / "scenario.cfg";
  if (!fs::exists(path)) return std::nullopt;
  const ScenarioConfig c = load_scenario_config(path);
  return Period{c.start, scenario_end(c)};
}

// ---------------------------------------------------------------------------

namespace {

struct InitialModel {
  ModelArtifact artifact;
  std::vector<AlgorithmEvaluation> evaluations;
};

InitialModel train_initial(const std::vector<SensorReading>& history, const std::string& room, Instant at,
                           const ScenarioConfig& c, std::uint64_t seed) {
  const auto examples = build_training_set(clean(history));
  InitialModel out;
  for (Algorithm algo : kAllAlgorithms) {
    out.evaluations.push_back(evaluate_algorithm(algo, examples, c.cv_folds, seed, c.training));
  }
  const auto& best = out.evaluations[select_best(out.evaluations)];
  out.artifact = fit_artifact(best.algorithm, examples, room, at, seed, c.training);
  out.artifact.cv_rmse = best.cv_rmse;
  out.artifact.test_rmse = best.test_rmse;
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::kStorageFailure, "cannot write " + path.string());
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& c, const fs::path& out_dir) {
  validate(c);
  RunLayout layout{out_dir};
  if (fs::exists(layout.audit_csv()) || fs::exists(layout.logs_dir())) {
    throw Error(ErrorCode::kConfigError, "run directory " + out_dir.string() + " already holds a run");
  }
  for (const auto& dir : {layout.data_dir(), layout.registry_dir(), layout.logs_dir(), layout.report_dir()}) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kStorageFailure, "cannot create " + dir.string() + ": " + ec.message());
  }
  write_file(out_dir / "scenario.cfg", render_scenario_config(c));

  const Instant start = c.start;
  const Instant end = scenario_end(c);
  const Duration history = std::chrono::days(c.history_days);
  const Duration retrain_window = std::chrono::days(c.retrain_window_days);
  const std::size_t n_rooms = c.rooms.size();

  // 1. Sensor data: one continuous series per room, split at `start`.
  std::vector<std::vector<SensorReading>> histories(n_rooms);
  std::vector<std::vector<SensorReading>> live(n_rooms);
  for (std::size_t r = 0; r < n_rooms; ++r) {
    auto series = generate_room_series(c.rooms[r].profile, derive_seed(c.seeds.generator, r), start - history,
                                       history + std::chrono::days(c.duration_days));
    std::mt19937_64 corrupt_rng(derive_seed(c.seeds.corruption, r));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& reading : series) {
      if (unit(corrupt_rng) < c.corrupt_rate) reading.humidity = std::nan("");
    }
    const auto split = std::find_if(series.begin(), series.end(), [&](const SensorReading& x) { return x.timestamp >= start; });
    histories[r].assign(series.begin(), split);
    live[r].assign(split, series.end());
    const std::string& room = c.rooms[r].profile.room;
    write_readings_csv(layout.data_dir() / (room + "_history.csv"), histories[r]);
    write_readings_csv(layout.data_dir() / (room + "_live.csv"), live[r]);
  }

  // 2. Initial models: best of four by k-fold CV on the history window.
  std::vector<InitialModel> initial(n_rooms);
  auto seed_for = [&](std::size_t r) { return derive_seed(c.seeds.training, r); };
  if (c.parallel_training) {
    std::vector<std::future<InitialModel>> jobs;
    for (std::size_t r = 0; r < n_rooms; ++r) {
      jobs.push_back(std::async(std::launch::async, train_initial, std::cref(histories[r]),
                                std::cref(c.rooms[r].profile.room), start, std::cref(c), seed_for(r)));
    }
    for (std::size_t r = 0; r < n_rooms; ++r) initial[r] = jobs[r].get();
  } else {
    for (std::size_t r = 0; r < n_rooms; ++r) {
      initial[r] = train_initial(histories[r], c.rooms[r].profile.room, start, c, seed_for(r));
    }
  }

  Registry registry(layout.registry_dir());
  Supervisor supervisor(&registry, c.telemetry_interval, c.silence_intervals, c.aqi_alert_threshold);
  InMemoryBroker broker;
  broker.connect();

  std::vector<std::unique_ptr<EdgeAgent>> agents;
  std::vector<Subscription> reading_subs;
  std::vector<Subscription> control_subs;
  std::map<std::string, std::size_t> device_index;
  for (std::size_t r = 0; r < n_rooms; ++r) {
    const RoomSetup& setup = c.rooms[r];
    AgentConfig ac;
    ac.device_id = setup.device_id;
    ac.room = setup.profile.room;
    ac.log_path = layout.prediction_log(setup.device_id);
    ac.drift_threshold = c.drift_threshold;
    ac.min_drift_samples = c.min_drift_samples;
    ac.retention = std::max(retrain_window, kDay) + kDay;
    ac.seed = derive_seed(c.seeds.telemetry, r);
    agents.push_back(std::make_unique<EdgeAgent>(ac, registry, &supervisor, &broker));
    agents.back()->seed_history(histories[r]);
    supervisor.register_device(setup.device_id, setup.profile.room);
    reading_subs.push_back(broker.subscribe(topics::sensor_readings(setup.profile.room)));
    control_subs.push_back(broker.subscribe(topics::device_control(setup.device_id)));
    device_index[setup.device_id] = r;
  }
  Subscription drift_sub = broker.subscribe(Topic("fleet/+/drift"));
  Subscription telemetry_sub = broker.subscribe(Topic("sensors/+/telemetry"));

  ScenarioResult result;
  result.layout = layout;
  result.period = {start, end};

  for (std::size_t r = 0; r < n_rooms; ++r) {
    const ModelVersion v = registry.register_model(initial[r].artifact, start);
    if (!agents[r]->deploy_version(v, start)) {
      throw Error(ErrorCode::kArtifactVerificationFailed, "initial model for room " + c.rooms[r].profile.room + " failed to deploy");
    }
  }

  // 3. Event loop.
  SimClock clock(start);
  std::vector<std::uint64_t> sensor_timer(n_rooms);
  std::map<std::uint64_t, std::size_t> timer_room;
  std::map<std::uint64_t, std::size_t> timer_device;
  std::vector<std::size_t> next_reading(n_rooms, 0);
  std::vector<DeviceStats> stats(n_rooms);
  for (std::size_t r = 0; r < n_rooms; ++r) {
    stats[r].device_id = c.rooms[r].device_id;
    stats[r].room = c.rooms[r].profile.room;
    timer_room[clock.schedule_every(EventKind::kSensor, start, kSamplingInterval, c.rooms[r].profile.room)] = r;
  }
  for (std::size_t r = 0; r < n_rooms; ++r) {
    timer_device[clock.schedule_every(EventKind::kTelemetry, start, c.telemetry_interval, c.rooms[r].device_id)] = r;
  }
  Instant first_trigger = std::chrono::floor<std::chrono::days>(start) + c.daily_trigger_offset;
  while (first_trigger <= start) first_trigger += kDay;
  for (std::size_t r = 0; r < n_rooms; ++r) {
    timer_device[clock.schedule_every(EventKind::kDailyTrigger, first_trigger, kDay, c.rooms[r].device_id)] = r;
  }
  struct PendingDeploy {
    std::size_t device;
    ModelVersion version;
  };
  std::map<std::uint64_t, PendingDeploy> pending_deploys;

  const RetrainPolicy policy{retrain_window, c.retrain_min_examples, c.cv_folds, c.seeds.training, c.training};
  const auto wall_start = std::chrono::steady_clock::now();

  auto pump_telemetry = [&]() {
    while (auto msg = telemetry_sub.try_receive()) supervisor.ingest_telemetry(decode_telemetry(msg->payload));
  };
  auto pump_drift = [&](Instant now) {
    while (auto msg = drift_sub.try_receive()) {
      const DriftReport report = decode_drift(msg->payload);
      result.drift_reports.push_back(report);
      if (!report.triggered) continue;
      const std::size_t d = device_index.at(report.device_id);
      const auto examples = agents[d]->recent_examples(now, retrain_window);
      try {
        const DeploymentDecision decision = registry.handle_drift(report, examples, policy, now);
        result.retrains.push_back({now, report.device_id, report.room, report.daily_rmse, decision.old_version,
                                   decision.new_version, decision.algorithm, decision.new_cv_rmse});
        const auto id = clock.schedule_at(EventKind::kControl, now + c.deploy_latency, report.device_id);
        pending_deploys[id] = {d, decision.new_version};
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kInsufficientData) throw;
        const std::optional<ModelVersion> live_version =
            report.model_version.value != 0 ? std::optional(report.model_version) : std::nullopt;
        supervisor.raise({now, AlarmKind::kDeployFailure, report.room, report.device_id,
                          static_cast<double>(examples.size()), static_cast<double>(c.retrain_min_examples)},
                         live_version);
      }
    }
  };

  while (auto event = clock.pop_next(end)) {
    const Instant now = event->at;
    switch (event->kind) {
      case EventKind::kSensor: {
        const std::size_t r = timer_room.at(event->timer_id);
        if (next_reading[r] >= live[r].size() || live[r][next_reading[r]].timestamp != now) break;
        broker.publish(topics::sensor_readings(c.rooms[r].profile.room), encode_reading(live[r][next_reading[r]++]), now);
        ++stats[r].published;
        while (auto msg = reading_subs[r].try_receive()) agents[r]->process1_step(decode_reading(msg->payload), now);
        break;
      }
      case EventKind::kTelemetry: {
        const std::size_t d = timer_device.at(event->timer_id);
        broker.publish(topics::sensor_telemetry(c.rooms[d].profile.room), encode_telemetry(agents[d]->make_telemetry(now)),
                       now);
        pump_telemetry();
        break;
      }
      case EventKind::kDailyTrigger: {
        const std::size_t d = timer_device.at(event->timer_id);
        supervisor.sweep_silence(now);
        agents[d]->process2_evaluate(now);
        pump_drift(now);
        break;
      }
      case EventKind::kControl: {
        const auto it = pending_deploys.find(event->timer_id);
        if (it == pending_deploys.end()) break;
        const std::size_t d = it->second.device;
        broker.publish(topics::device_control(c.rooms[d].device_id), encode_control({"deploy", it->second.version}), now);
        while (auto msg = control_subs[d].try_receive()) agents[d]->handle_control(msg->payload, now);
        pending_deploys.erase(it);
        break;
      }
    }
    if (c.time_acceleration > 0.0) {
      const auto sim_elapsed = std::chrono::duration<double>(now - start);
      const auto due = wall_start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                        sim_elapsed / c.time_acceleration);
      std::this_thread::sleep_until(due);
    }
  }

  // 4. Wrap up: flush logs, persist telemetry, build the report.
  for (std::size_t r = 0; r < n_rooms; ++r) {
    const AgentCounters counters = agents[r]->counters();
    stats[r].processed = counters.inferences;
    stats[r].dropped = counters.dropped;
    stats[r].duplicates = counters.duplicates;
    const auto telemetry = supervisor.telemetry(c.rooms[r].device_id);
    write_telemetry_csv(layout.telemetry_log(c.rooms[r].device_id), telemetry);
  }
  result.alarms = supervisor.alarms();
  result.devices = stats;
  AuditFilter deploys;
  deploys.event = AuditEvent::kDeploy;
  for (const auto& record : registry.audit_query(deploys)) {
    if (record.model_version) result.timelines[record.room].emplace_back(record.at, *record.model_version);
  }
  agents.clear();
  reading_subs.clear();
  control_subs.clear();
  broker.close();

  const FleetData data = load_fleet_data(layout);
  result.report = build_fleet_report(data, result.period);
  write_fleet_report(result.report, data, layout.report_dir());

  for (const auto& [device, rows] : data.predictions) {
    result.prediction_rows += rows.size();
    for (const auto& row : rows) {
      if (model_at(data.audit, row.reading.room, row.predicted_at) != row.model_version) ++result.traceability_violations;
    }
  }
  return result;
}

}  // namespace edgefleet
