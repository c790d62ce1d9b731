#include <fstream>
#include <random>
#include <thread>

#include "doctest.h"
#include "edgefleet/error.hpp"
#include "edgefleet/registry.hpp"
#include "edgefleet/simulator.hpp"
#include "support.hpp"

using namespace edgefleet;
using testing::at_min;
using testing::t0;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an edgefleet::Error");
  return ErrorCode::kInvalidArgument;
}

std::vector<LabeledExample> linear_examples(std::size_t n, std::uint64_t seed, const std::string& room = "A10") {
  const auto d = testing::linear_data(n, seed);
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({FeatureVector{d.rows[i], at_min(5 * static_cast<std::int64_t>(i)), room}, d.targets[i]});
  return out;
}

ModelArtifact mlr_artifact(const std::string& room = "A10", std::uint64_t seed = 1) {
  return fit_artifact(Algorithm::kMlr, linear_examples(50, seed, room), room, t0(), 0);
}

std::vector<LabeledExample> room_examples(const std::string& room, std::uint64_t seed, int days) {
  const auto series = generate_room_series(default_profile(room), seed, t0(), std::chrono::days(days));
  return build_training_set(clean(series));
}

DriftReport drift_report(const std::string& room, ModelVersion version, double rmse) {
  DriftReport r;
  r.device_id = "dev-" + room;
  r.room = room;
  r.evaluated_at = t0() + std::chrono::days(3);
  r.window_start = r.evaluated_at - kDay;
  r.window_end = r.evaluated_at;
  r.daily_rmse = rmse;
  r.n_evaluated = 285;
  r.triggered = rmse >= 10.0;
  r.model_version = version;
  return r;
}

RetrainPolicy fast_policy() {
  RetrainPolicy p;
  p.seed = 7;
  p.config.forest.trees = 8;
  p.config.elm.hidden = 16;
  p.config.svr.epochs = 30;
  return p;
}

const char* detail(const AuditRecord& r, const char* key) {
  const std::string* v = find_field(r.detail, key);
  return v == nullptr ? "" : v->c_str();
}

}  // namespace

TEST_SUITE("registry") {
  TEST_CASE("versions are assigned 1, 2, 3") {
    testing::TempDir dir("reg");
    Registry reg(dir.path());
    for (std::uint64_t v = 1; v <= 3; ++v) CHECK(reg.register_model(mlr_artifact("A10", v), at_min(static_cast<std::int64_t>(v))).value == v);
    CHECK(std::filesystem::exists(reg.model_path(ModelVersion{3})));
    CHECK(reg.model_path(ModelVersion{3}).filename() == "v3.mdl");
    const auto records = reg.audit_query();
    REQUIRE(records.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(records[i].seq == i + 1);
      CHECK(records[i].event == AuditEvent::kRegister);
    }
  }

  TEST_CASE("identical bytes register as distinct snapshots") {
    testing::TempDir dir("reg");
    Registry reg(dir.path());
    const std::string bytes = serialize(mlr_artifact());
    const auto a = reg.register_bytes(bytes, t0());
    const auto b = reg.register_bytes(bytes, t0());
    CHECK(a.value == 1);
    CHECK(b.value == 2);
    CHECK(reg.fetch_artifact(b).version == b);
  }

  TEST_CASE("a corrupt artifact consumes no version") {
    testing::TempDir dir("reg");
    Registry reg(dir.path());
    std::string bytes = serialize(mlr_artifact());
    bytes[bytes.size() - 3] = bytes[bytes.size() - 3] == '1' ? '2' : '1';
    CHECK(code_of([&] { reg.register_bytes(bytes, t0()); }) == ErrorCode::kArtifactVerificationFailed);
    ModelArtifact bad = mlr_artifact();
    bad.test_rmse = -2.0;
    CHECK(code_of([&] { reg.register_model(bad, t0()); }) == ErrorCode::kArtifactVerificationFailed);
    CHECK(reg.register_model(mlr_artifact(), t0()).value == 1);
    CHECK(reg.audit_query().size() == 1);
  }

  TEST_CASE("fetch returns the registered artifact and guards unknown and rotted files") {
    testing::TempDir dir("reg");
    Registry reg(dir.path());
    std::vector<ModelArtifact> originals;
    for (std::uint64_t s = 1; s <= 3; ++s) {
      originals.push_back(mlr_artifact("A10", s));
      reg.register_model(originals.back(), t0());
    }
    const ModelArtifact two = reg.fetch_artifact(ModelVersion{2});
    CHECK(two.version.value == 2);
    CHECK(two.params == originals[1].params);
    CHECK(code_of([&] { reg.fetch_artifact(ModelVersion{99}); }) == ErrorCode::kUnknownVersion);

    std::string stored = testing::slurp(reg.model_path(ModelVersion{3}));
    stored[stored.size() - 2] = stored[stored.size() - 2] == '5' ? '6' : '5';
    std::ofstream(reg.model_path(ModelVersion{3}), std::ios::binary | std::ios::trunc) << stored;
    CHECK(code_of([&] { reg.fetch_artifact(ModelVersion{3}); }) == ErrorCode::kCorruptArtifact);
  }

  TEST_CASE("model_at boundary belongs to the new deploy") {
    testing::TempDir dir("reg");
    Registry reg(dir.path());
    const auto v1 = reg.register_model(mlr_artifact(), t0());
    const auto v2 = reg.register_model(mlr_artifact("A10", 2), t0());
    reg.record_deploy(v1, "dev", t0());
    reg.record_deploy(v2, "dev", t0() + std::chrono::milliseconds(100));
    CHECK_FALSE(reg.model_at("A10", t0() - std::chrono::milliseconds(1)));
    CHECK(reg.model_at("A10", t0() + std::chrono::milliseconds(50)) == v1);
    CHECK(reg.model_at("A10", t0() + std::chrono::milliseconds(100)) == v2);
    CHECK_FALSE(reg.model_at("A29", t0() + kDay));
    CHECK(reg.deployed_version("A10") == v2);
    CHECK(reg.entry(v1)->status == EntryStatus::kRetired);
    CHECK(reg.entry(v2)->status == EntryStatus::kDeployed);

    const auto deploys = reg.audit_query([] {
      AuditFilter f;
      f.event = AuditEvent::kDeploy;
      return f;
    }());
    REQUIRE(deploys.size() == 2);
    CHECK(std::string(detail(deploys[0], "old_version")) == "none");
    CHECK(std::string(detail(deploys[1], "old_version")) == "1");
    CHECK(std::string(detail(deploys[1], "new_version")) == "2");
  }

  TEST_CASE("filters select by room, device, event and inclusive time range") {
    testing::TempDir dir("reg");
    Registry reg(dir.path());
    const auto a = reg.register_model(mlr_artifact("A10"), at_min(0));
    const auto b = reg.register_model(mlr_artifact("A29"), at_min(1));
    reg.record_deploy(a, "d10", at_min(2));
    reg.record_deploy(b, "d29", at_min(3));
    CHECK(reg.audit_query().size() == 4);
    AuditFilter f;
    f.room = "A29";
    CHECK(reg.audit_query(f).size() == 2);
    f = {};
    f.device_id = "d10";
    CHECK(reg.audit_query(f).size() == 1);
    f = {};
    f.from = at_min(1);
    f.to = at_min(2);
    const auto ranged = reg.audit_query(f);
    REQUIRE(ranged.size() == 2);
    CHECK(ranged[0].seq < ranged[1].seq);
  }

  TEST_CASE("reopening replays the audit log and continues numbering") {
    testing::TempDir dir("reg");
    {
      Registry reg(dir.path());
      reg.register_model(mlr_artifact(), t0());
      reg.record_deploy(ModelVersion{1}, "dev", t0());
    }
    const std::string before = testing::slurp(dir / "audit.csv");
    Registry reg(dir.path());
    CHECK(reg.deployed_version("A10") == ModelVersion{1});
    CHECK(reg.register_model(mlr_artifact("A10", 4), t0() + kHour).value == 2);
    const std::string after = testing::slurp(dir / "audit.csv");
    CHECK(after.substr(0, before.size()) == before);
    CHECK(reg.audit_query().back().seq == 3);
  }

  TEST_CASE("a gap in the audit sequence is refused on open") {
    testing::TempDir dir("reg");
    {
      Registry reg(dir.path());
      reg.register_model(mlr_artifact(), t0());
      reg.register_model(mlr_artifact("A10", 2), t0());
    }
    std::string text = testing::slurp(dir / "audit.csv");
    const auto line2 = text.find("\n2,");
    text.replace(line2 + 1, 1, "5");
    std::ofstream(dir / "audit.csv", std::ios::trunc) << text;
    CHECK(code_of([&] { Registry reopened(dir.path()); }) == ErrorCode::kStorageFailure);
  }

  TEST_CASE("audit rows round-trip through CSV") {
    AuditRecord r;
    r.seq = 12;
    r.at = at_min(7);
    r.event = AuditEvent::kRetrain;
    r.device_id = "edge-tpu";
    r.room = "A30";
    r.model_version = ModelVersion{4};
    r.detail = {{"outcome", "registered"}, {"cv_MLR", "4.5"}};
    const auto back = parse_audit_row(split_csv_line(format_audit_row(r)));
    CHECK(back == r);
    CHECK(parse_detail(format_detail(r.detail)) == r.detail);
    CHECK(audit_header() == std::vector<std::string>{"seq", "at", "event", "device_id", "room", "model_version", "detail"});
    for (auto e : {AuditEvent::kRegister, AuditEvent::kDeploy, AuditEvent::kDrift, AuditEvent::kRetrain,
                   AuditEvent::kAlarm, AuditEvent::kDeployFailed})
      CHECK(parse_audit_event(to_string(e)) == e);
  }

  TEST_CASE("handle_drift retrains best-of-four and logs the decision") {
    testing::TempDir dir("reg");
    Registry reg(dir.path());
    const auto old = reg.register_model(mlr_artifact("A10"), t0());
    reg.record_deploy(old, "dev-A10", t0());
    const auto recent = room_examples("A10", 3, 3);
    const auto decision = reg.handle_drift(drift_report("A10", old, 14.23), recent, fast_policy(), t0() + std::chrono::days(3));
    CHECK(decision.new_version.value == 2);
    CHECK(decision.old_version == old);
    REQUIRE(decision.evaluations.size() == 4);
    const std::size_t best = select_best(decision.evaluations);
    CHECK(decision.algorithm == decision.evaluations[best].algorithm);
    CHECK(decision.new_cv_rmse == decision.evaluations[best].cv_rmse);
    for (const auto& e : decision.evaluations) CHECK(decision.new_cv_rmse <= e.cv_rmse);

    const auto records = reg.audit_query();
    REQUIRE(records.size() == 4);
    CHECK(records[2].event == AuditEvent::kRegister);
    CHECK(records[3].event == AuditEvent::kRetrain);
    CHECK(std::string(detail(records[3], "outcome")) == "registered");
    CHECK(std::string(detail(records[3], "old_version")) == "1");
    CHECK(std::string(detail(records[3], "drift_rmse")) == "14.23");
    CHECK(std::string(detail(records[3], "algorithm")) == to_string(decision.algorithm));
    // Candidate until the device confirms.
    CHECK(reg.entry(decision.new_version)->status == EntryStatus::kCandidate);
    CHECK(reg.deployed_version("A10") == old);
    const ModelArtifact fresh = reg.fetch_artifact(decision.new_version);
    CHECK(fresh.room == "A10");
    CHECK(fresh.cv_rmse == decision.new_cv_rmse);
  }

  TEST_CASE("handle_drift on noiseless linear data picks MLR") {
    testing::TempDir dir("reg");
    Registry reg(dir.path());
    const auto decision = reg.handle_drift(drift_report("A10", ModelVersion{}, 12.0), linear_examples(300, 5),
                                           fast_policy(), t0());
    CHECK(decision.algorithm == Algorithm::kMlr);
    CHECK(decision.new_cv_rmse < 1e-6);
  }

  TEST_CASE("handle_drift is deterministic") {
    testing::TempDir a("reg"), b("reg");
    Registry ra(a.path()), rb(b.path());
    const auto recent = room_examples("A29", 9, 2);
    const auto report = drift_report("A29", ModelVersion{}, 15.0);
    const auto da = ra.handle_drift(report, recent, fast_policy(), t0() + kDay);
    const auto db = rb.handle_drift(report, recent, fast_policy(), t0() + kDay);
    CHECK(ra.fetch_bytes(da.new_version) == rb.fetch_bytes(db.new_version));
    CHECK(testing::slurp(a / "audit.csv") == testing::slurp(b / "audit.csv"));
  }

  TEST_CASE("too few recent examples keeps the old model") {
    testing::TempDir dir("reg");
    Registry reg(dir.path());
    const auto old = reg.register_model(mlr_artifact(), t0());
    reg.record_deploy(old, "dev-A10", t0());
    const auto recent = linear_examples(10, 2);
    CHECK(code_of([&] { reg.handle_drift(drift_report("A10", old, 20.0), recent, fast_policy(), t0() + kDay); }) ==
          ErrorCode::kInsufficientData);
    CHECK(reg.deployed_version("A10") == old);
    CHECK_FALSE(reg.is_registered(ModelVersion{2}));
    const auto last = reg.audit_query().back();
    CHECK(last.event == AuditEvent::kRetrain);
    CHECK(std::string(detail(last, "outcome")) == "insufficient_data");
  }

  TEST_CASE("concurrent registrations keep versions and seq gapless") {
    testing::TempDir dir("reg");
    Registry reg(dir.path());
    const std::string bytes = serialize(mlr_artifact());
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
      threads.emplace_back([&] {
        for (int i = 0; i < 10; ++i) reg.register_bytes(bytes, t0());
      });
    for (auto& t : threads) t.join();
    const auto records = reg.audit_query();
    REQUIRE(records.size() == 40);
    for (std::size_t i = 0; i < records.size(); ++i) {
      CHECK(records[i].seq == i + 1);
      CHECK(records[i].model_version->value == i + 1);
    }
    CHECK(read_audit_csv(reg.audit_path()) == records);
  }

  TEST_CASE("registered_by respects registration time") {
    testing::TempDir dir("reg");
    Registry reg(dir.path());
    const auto v = reg.register_model(mlr_artifact(), at_min(10));
    CHECK(reg.registered_by(v, at_min(10)));
    CHECK_FALSE(reg.registered_by(v, at_min(9)));
    CHECK_FALSE(reg.registered_by(ModelVersion{5}, at_min(20)));
  }
}
