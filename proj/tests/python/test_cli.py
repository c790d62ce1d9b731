import csv
import io
from datetime import datetime, timedelta

import pytest


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_train_best_reports_every_algorithm_and_selects_one(cli, noisy_csv, tmp_path):
    done = cli("train", "--data", noisy_csv, "--room", "A10", "--algo", "best", "--out", tmp_path, "--folds", 5)
    assert done.returncode == 0, done.stderr
    rows = table(done.stdout)
    assert [r["algorithm"] for r in rows] == ["MLR", "SVR", "ELM", "RFR"]
    selected = [r for r in rows if r["selected"] == "yes"]
    assert len(selected) == 1
    best = min(rows, key=lambda r: float(r["cv_rmse"]))
    assert selected[0]["algorithm"] == best["algorithm"]
    assert (tmp_path / f"A10_{best['algorithm'].lower()}.mdl").exists()


def test_train_mlr_is_exact_on_noiseless_data(cli, linear_csv, tmp_path):
    done = cli("train", "--data", linear_csv, "--room", "A10", "--algo", "mlr", "--out", tmp_path)
    assert done.returncode == 0, done.stderr
    (row,) = table(done.stdout)
    assert float(row["test_rmse"]) < 1e-6
    assert float(row["cv_rmse"]) < 1e-6


def test_train_is_reproducible(cli, noisy_csv, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        out.mkdir()
        assert cli("train", "--data", noisy_csv, "--room", "A10", "--algo", "rfr", "--out", out, "--seed", 9,
                   "--folds", 3).returncode == 0
    assert (a / "A10_rfr.mdl").read_bytes() == (b / "A10_rfr.mdl").read_bytes()


def test_inspect_model(cli, linear_csv, tmp_path):
    cli("train", "--data", linear_csv, "--room", "A10", "--algo", "mlr", "--out", tmp_path)
    done = cli("inspect-model", "--file", tmp_path / "A10_mlr.mdl")
    assert done.returncode == 0
    assert "algorithm: MLR" in done.stdout
    assert "room: A10" in done.stdout


def test_simulate_summary(quick_run):
    assert (quick_run / "registry" / "audit.csv").exists()
    assert (quick_run / "report" / "drift_events.csv").exists()


def test_audit_prints_every_row(cli, quick_run):
    done = cli("audit", "--run", quick_run)
    assert done.returncode == 0
    on_disk = (quick_run / "registry" / "audit.csv").read_text().splitlines()
    assert done.stdout.splitlines() == on_disk


def test_audit_filters_by_event(cli, quick_run):
    rows = table(cli("audit", "--run", quick_run, "--event", "drift").stdout)
    assert rows
    assert {r["event"] for r in rows} == {"drift"}
    assert len(rows) == 4  # one evaluation per day


def test_audit_at_reports_the_live_version(cli, quick_run):
    deploys = table(cli("audit", "--run", quick_run, "--event", "deploy").stdout)
    assert len(deploys) >= 2
    first, second = deploys[0], deploys[1]
    switch = datetime.fromisoformat(second["at"].replace("Z", "+00:00"))
    just_before = (switch - timedelta(seconds=1)).strftime("%Y-%m-%dT%H:%M:%SZ")

    before = table(cli("audit", "--run", quick_run, "--at", just_before).stdout)
    assert before == [{"room": "A10", "model_version": first["model_version"]}]
    # The deploy instant already belongs to the new model.
    at = table(cli("audit", "--run", quick_run, "--at", second["at"]).stdout)
    assert at == [{"room": "A10", "model_version": second["model_version"]}]


def test_report_rebuilds_the_summary(cli, quick_run):
    done = cli("report", "--run", quick_run, "--emit-plot-data")
    assert done.returncode == 0
    assert (quick_run / "report" / "daily_rmse.csv").exists()
    assert done.stdout == (quick_run / "report" / "summary.txt").read_text()


@pytest.mark.parametrize(
    "args, code",
    [
        (["train", "--data", "/nonexistent.csv", "--room", "A10", "--algo", "mlr", "--out", "/tmp"], 2),
        (["train", "--data", "{tiny}", "--room", "A10", "--algo", "mlr", "--out", "/tmp"], 3),
        (["train", "--data", "{tiny}", "--room", "A10", "--algo", "xgboost", "--out", "/tmp"], 2),
        (["audit", "--run", "/nonexistent-run"], 2),
        (["simulate"], 2),
    ],
)
def test_exit_codes(cli, tmp_path, args, code):
    from conftest import write_readings

    tiny = write_readings(tmp_path / "tiny.csv", [50, 51, 52])
    done = cli(*[str(tiny) if a == "{tiny}" else a for a in args])
    assert done.returncode == code, done.stderr
    if code != 0:
        assert done.stderr.startswith("error: ")
