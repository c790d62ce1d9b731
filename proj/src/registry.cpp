#include "edgefleet/registry.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <mutex>
#include <sstream>

#include "edgefleet/error.hpp"

namespace edgefleet {

namespace fs = std::filesystem;

std::string_view to_string(AuditEvent event) {
  switch (event) {
    case AuditEvent::kRegister: return "register";
    case AuditEvent::kDeploy: return "deploy";
    case AuditEvent::kDrift: return "drift";
    case AuditEvent::kRetrain: return "retrain";
    case AuditEvent::kAlarm: return "alarm";
    case AuditEvent::kDeployFailed: return "deploy_failed";
  }
  return "unknown";
}

AuditEvent parse_audit_event(std::string_view text) {
  for (auto e : {AuditEvent::kRegister, AuditEvent::kDeploy, AuditEvent::kDrift, AuditEvent::kRetrain,
                 AuditEvent::kAlarm, AuditEvent::kDeployFailed}) {
    if (to_string(e) == text) return e;
  }
  throw Error(ErrorCode::kMalformedField, "unknown audit event '" + std::string(text) + "'");
}

std::string_view to_string(EntryStatus status) {
  switch (status) {
    case EntryStatus::kCandidate: return "candidate";
    case EntryStatus::kDeployed: return "deployed";
    case EntryStatus::kRetired: return "retired";
  }
  return "unknown";
}

bool AuditFilter::matches(const AuditRecord& r) const {
  if (room && r.room != *room) return false;
  if (device_id && r.device_id != *device_id) return false;
  if (from && r.at < *from) return false;
  if (to && r.at > *to) return false;
  if (event && r.event != *event) return false;
  return true;
}

std::vector<std::string> audit_header() {
  return {"seq", "at", "event", "device_id", "room", "model_version", "detail"};
}

std::string format_detail(const FieldMap& detail) {
  std::string out;
  for (const auto& [key, value] : detail) {
    if (!out.empty()) out += ';';
    out += key;
    out += '=';
    out += value;
  }
  return out;
}

FieldMap parse_detail(std::string_view text) {
  FieldMap out;
  while (!text.empty()) {
    const auto end = text.find(';');
    const std::string_view item = text.substr(0, end);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kMalformedField, "audit detail item without '=': '" + std::string(item) + "'");
    }
    out.emplace_back(std::string(item.substr(0, eq)), std::string(item.substr(eq + 1)));
    if (end == std::string_view::npos) break;
    text.remove_prefix(end + 1);
  }
  return out;
}

std::string format_audit_row(const AuditRecord& r) {
  return join_csv({std::to_string(r.seq), format_rfc3339(r.at), std::string(to_string(r.event)), r.device_id,
                   r.room, r.model_version ? std::to_string(r.model_version->value) : std::string(),
                   format_detail(r.detail)});
}

AuditRecord parse_audit_row(const std::vector<std::string>& cells) {
  if (cells.size() != 7) {
    throw Error(ErrorCode::kMalformedField, "audit row has " + std::to_string(cells.size()) + " cells, expected 7");
  }
  AuditRecord r;
  const auto seq = parse_int(cells[0]);
  if (!seq || *seq < 0) throw Error(ErrorCode::kMalformedField, "bad audit seq '" + cells[0] + "'");
  r.seq = static_cast<std::uint64_t>(*seq);
  r.at = parse_rfc3339(cells[1]);
  r.event = parse_audit_event(cells[2]);
  r.device_id = cells[3];
  r.room = cells[4];
  if (!cells[5].empty()) {
    const auto v = parse_int(cells[5]);
    if (!v || *v < 0) throw Error(ErrorCode::kMalformedField, "bad model_version '" + cells[5] + "'");
    r.model_version = ModelVersion{static_cast<std::uint64_t>(*v)};
  }
  r.detail = parse_detail(cells[6]);
  return r;
}

std::vector<AuditRecord> read_audit_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kStorageFailure, "cannot open audit log " + path.string());
  std::vector<AuditRecord> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    out.push_back(parse_audit_row(split_csv_line(line)));
  }
  return out;
}

std::optional<ModelVersion> model_at(std::span<const AuditRecord> records, std::string_view room, Instant at) {
  const AuditRecord* best = nullptr;
  for (const auto& r : records) {
    if (r.event != AuditEvent::kDeploy || r.room != room || r.at > at || !r.model_version) continue;
    if (best == nullptr || r.at > best->at || (r.at == best->at && r.seq > best->seq)) best = &r;
  }
  if (best == nullptr) return std::nullopt;
  return best->model_version;
}

// ---------------------------------------------------------------------------

Registry::Registry(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_ / "models", ec);
  if (ec) throw Error(ErrorCode::kStorageFailure, "cannot create registry at " + dir_.string() + ": " + ec.message());

  const fs::path log = audit_path();
  const bool fresh = !fs::exists(log) || fs::file_size(log) == 0;
  if (!fresh) replay(read_audit_csv(log));

  audit_out_.open(log, std::ios::app);
  if (!audit_out_) throw Error(ErrorCode::kStorageFailure, "cannot open audit log " + log.string());
  if (fresh) {
    audit_out_ << join_csv(audit_header()) << '\n';
    audit_out_.flush();
  }
}

void Registry::replay(const std::vector<AuditRecord>& records) {
  for (const auto& r : records) {
    if (r.seq != audit_.size() + 1) {
      throw Error(ErrorCode::kStorageFailure, "audit log seq gap at " + std::to_string(r.seq));
    }
    audit_.push_back(r);
    if (!r.model_version) continue;
    const ModelVersion v = *r.model_version;
    if (r.event == AuditEvent::kRegister) {
      RegistryEntry e;
      e.version = v;
      e.room = r.room;
      e.registered_at = r.at;
      if (const auto* algo = find_field(r.detail, "algorithm")) e.algorithm = parse_algorithm(*algo);
      entries_[v.value] = e;
      next_version_ = std::max(next_version_, v.value + 1);
    } else if (r.event == AuditEvent::kDeploy) {
      if (auto it = deployed_.find(r.room); it != deployed_.end() && entries_.count(it->second.value)) {
        entries_[it->second.value].status = EntryStatus::kRetired;
      }
      deployed_[r.room] = v;
      if (auto it = entries_.find(v.value); it != entries_.end()) it->second.status = EntryStatus::kDeployed;
    }
  }
}

fs::path Registry::model_path(ModelVersion version) const {
  return dir_ / "models" / ("v" + std::to_string(version.value) + ".mdl");
}

AuditRecord Registry::append_locked(AuditRecord record) {
  record.seq = audit_.size() + 1;
  audit_out_ << format_audit_row(record) << '\n';
  audit_out_.flush();
  if (!audit_out_) throw Error(ErrorCode::kStorageFailure, "audit append failed on " + audit_path().string());
  audit_.push_back(record);
  return record;
}

AuditRecord Registry::append_audit(AuditRecord record) {
  std::unique_lock lock(mutex_);
  return append_locked(std::move(record));
}

ModelVersion Registry::register_locked(ModelArtifact artifact, Instant at) {
  validate_artifact(artifact);
  const ModelVersion version{next_version_};
  artifact.version = version;
  const std::string bytes = serialize(artifact);

  const fs::path path = model_path(version);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << bytes;
    out.flush();
    if (!out) throw Error(ErrorCode::kStorageFailure, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kStorageFailure, "cannot store " + path.string() + ": " + ec.message());

  ++next_version_;
  RegistryEntry entry;
  entry.version = version;
  entry.room = artifact.room;
  entry.algorithm = artifact.algorithm;
  entry.registered_at = at;
  entries_[version.value] = entry;

  AuditRecord record;
  record.at = at;
  record.event = AuditEvent::kRegister;
  record.room = artifact.room;
  record.model_version = version;
  record.detail = {{"algorithm", std::string(to_string(artifact.algorithm))},
                   {"cv_rmse", format_double(artifact.cv_rmse)},
                   {"test_rmse", format_double(artifact.test_rmse)}};
  append_locked(std::move(record));
  return version;
}

ModelVersion Registry::register_model(ModelArtifact artifact, Instant at) {
  std::unique_lock lock(mutex_);
  return register_locked(std::move(artifact), at);
}

ModelVersion Registry::register_bytes(std::string_view bytes, Instant at) {
  ModelArtifact artifact;
  try {
    artifact = deserialize(bytes);
  } catch (const Error& e) {
    throw Error(ErrorCode::kArtifactVerificationFailed, e.what());
  }
  std::unique_lock lock(mutex_);
  return register_locked(std::move(artifact), at);
}

std::string Registry::fetch_bytes(ModelVersion version) const {
  {
    std::shared_lock lock(mutex_);
    if (!entries_.count(version.value)) {
      throw Error(ErrorCode::kUnknownVersion, "no model version " + std::to_string(version.value));
    }
  }
  std::ifstream in(model_path(version), std::ios::binary);
  if (!in) throw Error(ErrorCode::kCorruptArtifact, "stored artifact missing: " + model_path(version).string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

ModelArtifact Registry::fetch_artifact(ModelVersion version) const {
  const std::string bytes = fetch_bytes(version);
  ModelArtifact artifact = deserialize(bytes);
  if (artifact.version != version) {
    throw Error(ErrorCode::kCorruptArtifact, "stored artifact v" + std::to_string(version.value) +
                                                 " claims version " + std::to_string(artifact.version.value));
  }
  return artifact;
}

void Registry::record_deploy(ModelVersion version, const std::string& device_id, Instant at) {
  std::unique_lock lock(mutex_);
  auto it = entries_.find(version.value);
  if (it == entries_.end()) throw Error(ErrorCode::kUnknownVersion, "no model version " + std::to_string(version.value));
  const std::string room = it->second.room;

  std::optional<ModelVersion> old;
  if (auto d = deployed_.find(room); d != deployed_.end()) {
    old = d->second;
    entries_[d->second.value].status = EntryStatus::kRetired;
  }
  deployed_[room] = version;
  it->second.status = EntryStatus::kDeployed;

  AuditRecord record;
  record.at = at;
  record.event = AuditEvent::kDeploy;
  record.device_id = device_id;
  record.room = room;
  record.model_version = version;
  record.detail = {{"old_version", old ? std::to_string(old->value) : std::string("none")},
                   {"new_version", std::to_string(version.value)}};
  append_locked(std::move(record));
}

void Registry::record_deploy_failed(ModelVersion version, const std::string& device_id, const std::string& room,
                                    Instant at, const std::string& reason) {
  std::string sanitized = reason;
  std::replace_if(sanitized.begin(), sanitized.end(), [](char c) { return c == ';' || c == '=' || c == '\n'; }, ' ');
  AuditRecord record;
  record.at = at;
  record.event = AuditEvent::kDeployFailed;
  record.device_id = device_id;
  record.room = room;
  record.model_version = version;
  record.detail = {{"reason", sanitized}};
  append_audit(std::move(record));
}

DeploymentDecision Registry::handle_drift(const DriftReport& report, std::span<const LabeledExample> recent,
                                          const RetrainPolicy& policy, Instant at) {
  DeploymentDecision decision;
  decision.old_version = deployed_version(report.room);

  if (recent.size() < policy.min_examples) {
    AuditRecord note;
    note.at = at;
    note.event = AuditEvent::kRetrain;
    note.device_id = report.device_id;
    note.room = report.room;
    note.model_version = decision.old_version;
    note.detail = {{"outcome", "insufficient_data"},
                   {"examples", std::to_string(recent.size())},
                   {"required", std::to_string(policy.min_examples)}};
    append_audit(std::move(note));
    throw Error(ErrorCode::kInsufficientData, "retrain for room " + report.room + " has " +
                                                  std::to_string(recent.size()) + " examples, needs " +
                                                  std::to_string(policy.min_examples));
  }

  // Training runs outside the lock so rooms can retrain in parallel.
  const std::uint64_t seed = derive_seed(policy.seed, static_cast<std::uint64_t>(epoch_ms(report.evaluated_at)));
  for (Algorithm algo : kAllAlgorithms) {
    decision.evaluations.push_back(evaluate_algorithm(algo, recent, policy.folds, seed, policy.config));
  }
  const AlgorithmEvaluation& best = decision.evaluations[select_best(decision.evaluations)];
  ModelArtifact artifact = fit_artifact(best.algorithm, recent, report.room, at, seed, policy.config);
  artifact.cv_rmse = best.cv_rmse;
  artifact.test_rmse = best.test_rmse;
  decision.algorithm = best.algorithm;
  decision.new_cv_rmse = best.cv_rmse;
  decision.old_cv_rmse = std::nan("");
  if (decision.old_version) {
    try {
      decision.old_cv_rmse = fetch_artifact(*decision.old_version).cv_rmse;
    } catch (const Error&) {
      // Old artifact unreadable; the retrain record shows nan.
    }
  }

  std::unique_lock lock(mutex_);
  decision.new_version = register_locked(std::move(artifact), at);

  AuditRecord record;
  record.at = at;
  record.event = AuditEvent::kRetrain;
  record.device_id = report.device_id;
  record.room = report.room;
  record.model_version = decision.new_version;
  record.detail = {{"outcome", "registered"},
                   {"algorithm", std::string(to_string(decision.algorithm))},
                   {"old_version", decision.old_version ? std::to_string(decision.old_version->value) : "none"},
                   {"old_cv_rmse", format_double(decision.old_cv_rmse)},
                   {"new_cv_rmse", format_double(decision.new_cv_rmse)},
                   {"drift_rmse", format_double(report.daily_rmse)},
                   {"examples", std::to_string(recent.size())}};
  for (const auto& e : decision.evaluations) {
    record.detail.emplace_back("cv_" + std::string(to_string(e.algorithm)), format_double(e.cv_rmse));
  }
  append_locked(std::move(record));
  return decision;
}

std::vector<AuditRecord> Registry::audit_query(const AuditFilter& filter) const {
  std::shared_lock lock(mutex_);
  std::vector<AuditRecord> out;
  std::copy_if(audit_.begin(), audit_.end(), std::back_inserter(out),
               [&](const AuditRecord& r) { return filter.matches(r); });
  return out;
}

std::optional<ModelVersion> Registry::model_at(const std::string& room, Instant at) const {
  std::shared_lock lock(mutex_);
  return edgefleet::model_at(audit_, room, at);
}

bool Registry::is_registered(ModelVersion version) const {
  std::shared_lock lock(mutex_);
  return entries_.count(version.value) != 0;
}

bool Registry::registered_by(ModelVersion version, Instant at) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(version.value);
  return it != entries_.end() && it->second.registered_at <= at;
}

std::optional<RegistryEntry> Registry::entry(ModelVersion version) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(version.value);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<ModelVersion> Registry::deployed_version(const std::string& room) const {
  std::shared_lock lock(mutex_);
  auto it = deployed_.find(room);
  if (it == deployed_.end()) return std::nullopt;
  return it->second;
}

std::vector<RegistryEntry> Registry::entries() const {
  std::shared_lock lock(mutex_);
  std::vector<RegistryEntry> out;
  for (const auto& [_, e] : entries_) out.push_back(e);
  return out;
}

}  // namespace edgefleet
