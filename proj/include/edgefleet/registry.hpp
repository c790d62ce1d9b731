#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "edgefleet/messages.hpp"
#include "edgefleet/models.hpp"
#include "edgefleet/pipeline.hpp"

namespace edgefleet {

enum class AuditEvent { kRegister, kDeploy, kDrift, kRetrain, kAlarm, kDeployFailed };

std::string_view to_string(AuditEvent event);
AuditEvent parse_audit_event(std::string_view text);

/// Immutable audit entry. `detail` values must not contain ';' or '='.
struct AuditRecord {
  std::uint64_t seq = 0;
  Instant at{};
  AuditEvent event = AuditEvent::kRegister;
  std::string device_id;
  std::string room;
  std::optional<ModelVersion> model_version;
  FieldMap detail;

  bool operator==(const AuditRecord&) const = default;
};

struct AuditFilter {
  std::optional<std::string> room;
  std::optional<std::string> device_id;
  std::optional<Instant> from;  // inclusive
  std::optional<Instant> to;    // inclusive
  std::optional<AuditEvent> event;

  bool matches(const AuditRecord& record) const;
};

std::vector<std::string> audit_header();
std::string format_audit_row(const AuditRecord& record);
AuditRecord parse_audit_row(const std::vector<std::string>& cells);
std::vector<AuditRecord> read_audit_csv(const std::filesystem::path& path);

std::string format_detail(const FieldMap& detail);
FieldMap parse_detail(std::string_view text);

/// Version live for `room` at `at`: the latest deploy record with
/// record.at <= at. A deploy instant belongs to the new model.
std::optional<ModelVersion> model_at(std::span<const AuditRecord> records, std::string_view room, Instant at);

enum class EntryStatus { kCandidate, kDeployed, kRetired };
std::string_view to_string(EntryStatus status);

struct RegistryEntry {
  ModelVersion version;
  std::string room;
  Algorithm algorithm = Algorithm::kMlr;
  Instant registered_at{};
  EntryStatus status = EntryStatus::kCandidate;
};

struct RetrainPolicy {
  Duration window = std::chrono::days(14);
  std::size_t min_examples = 100;
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  TrainConfig config;
};

struct DeploymentDecision {
  ModelVersion new_version;
  std::optional<ModelVersion> old_version;
  Algorithm algorithm = Algorithm::kMlr;
  double old_cv_rmse = 0.0;
  double new_cv_rmse = 0.0;
  std::vector<AlgorithmEvaluation> evaluations;
};

/// Model repository plus the append-only audit trail, persisted as
/// `<dir>/models/v<id>.mdl` and `<dir>/audit.csv`. All writes go through one
/// lock, so versions and audit sequence numbers are gapless; reads share it.
/// Opening an existing directory replays its audit log.
class Registry {
 public:
  explicit Registry(std::filesystem::path dir);

  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  /// Validates, assigns the next version, writes the .mdl and an audit
  /// `register` record. A rejected artifact consumes no version.
  ModelVersion register_model(ModelArtifact artifact, Instant at);
  /// Same, starting from serialized bytes (checksum and format verified).
  ModelVersion register_bytes(std::string_view bytes, Instant at);

  /// Re-reads and re-verifies the stored file. Throws kUnknownVersion,
  /// kCorruptArtifact.
  ModelArtifact fetch_artifact(ModelVersion version) const;
  std::string fetch_bytes(ModelVersion version) const;

  /// Marks `version` deployed for its room (retiring the previous one) and
  /// appends a `deploy` record.
  void record_deploy(ModelVersion version, const std::string& device_id, Instant at);
  void record_deploy_failed(ModelVersion version, const std::string& device_id, const std::string& room, Instant at,
                            const std::string& reason);

  /// Appends an arbitrary record; `seq` is assigned here.
  AuditRecord append_audit(AuditRecord record);

  /// Cross-validates every algorithm on `recent` (which the caller has
  /// already restricted to the policy window), picks the lowest cv_rmse,
  /// fits it on all of `recent`, registers it and logs `retrain`. The new
  /// model is a candidate until the device confirms with record_deploy.
  /// Throws kInsufficientData (after auditing the skip) when `recent` is
  /// smaller than policy.min_examples.
  DeploymentDecision handle_drift(const DriftReport& report, std::span<const LabeledExample> recent,
                                  const RetrainPolicy& policy, Instant at);

  std::vector<AuditRecord> audit_query(const AuditFilter& filter = {}) const;
  std::optional<ModelVersion> model_at(const std::string& room, Instant at) const;

  bool is_registered(ModelVersion version) const;
  /// Registered no later than `at`.
  bool registered_by(ModelVersion version, Instant at) const;
  std::optional<RegistryEntry> entry(ModelVersion version) const;
  std::optional<ModelVersion> deployed_version(const std::string& room) const;
  std::vector<RegistryEntry> entries() const;

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path model_path(ModelVersion version) const;
  std::filesystem::path audit_path() const { return dir_ / "audit.csv"; }

 private:
  ModelVersion register_locked(ModelArtifact artifact, Instant at);
  AuditRecord append_locked(AuditRecord record);
  void replay(const std::vector<AuditRecord>& records);

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  std::ofstream audit_out_;
  std::vector<AuditRecord> audit_;
  std::map<std::uint64_t, RegistryEntry> entries_;
  std::map<std::string, ModelVersion> deployed_;
  std::uint64_t next_version_ = 1;
};

}  // namespace edgefleet
