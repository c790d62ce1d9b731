"""Edge fleet model lifecycle: offline training, drift loop scenarios, audit and reports."""

from ._edgefleet import (
    AQI_ALERT_THRESHOLD,
    DRIFT_THRESHOLD,
    FEATURE_NAMES,
    Algorithm,
    EdgefleetError,
    ModelArtifact,
    ScenarioConfig,
    air_quality_alarm,
    audit,
    cross_validate,
    drift_triggered,
    fit_scaler,
    generate_room,
    model_at,
    parse_algorithm,
    read_readings,
    report,
    run_scenario,
    standardize,
    topic_matches,
    train_csv,
)

__all__ = [
    "AQI_ALERT_THRESHOLD",
    "DRIFT_THRESHOLD",
    "FEATURE_NAMES",
    "Algorithm",
    "EdgefleetError",
    "ModelArtifact",
    "ScenarioConfig",
    "air_quality_alarm",
    "audit",
    "cross_validate",
    "drift_triggered",
    "fit_scaler",
    "generate_room",
    "model_at",
    "parse_algorithm",
    "read_readings",
    "report",
    "run_scenario",
    "standardize",
    "topic_matches",
    "train_csv",
]
