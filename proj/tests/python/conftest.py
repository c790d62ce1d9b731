import os
import subprocess
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[2]
HEADER = ("timestamp,name,room,room_type,floor,air_quality,air_quality_static,ambient_light,"
          "humidity,iaq_accuracy,iaq_accuracy_static,pressure,temperature")


@pytest.fixture(scope="session")
def cli():
    path = Path(os.environ.get("EDGEFLEET_CLI", ROOT / "build" / "tools" / "edgefleet"))
    if not path.exists():
        pytest.skip(f"CLI not built at {path}")

    def run(*args):
        return subprocess.run([str(path), *map(str, args)], capture_output=True, text=True, timeout=600)

    return run


@pytest.fixture(scope="session")
def quick_run(cli, tmp_path_factory):
    """A four-day single-room run with one shift, shared by the audit tests."""
    out = tmp_path_factory.mktemp("quick") / "run"
    done = cli("simulate", "--config", ROOT / "configs" / "quick.cfg", "--out", out)
    assert done.returncode == 0, done.stderr
    return out


def write_readings(path, aqi, light=None, room="A10"):
    """Reading CSV at the 5-minute cadence from 2020-03-01."""
    lines = [HEADER]
    for i, q in enumerate(aqi):
        minutes = 5 * i
        stamp = f"2020-03-{1 + minutes // 1440:02d}T{minutes % 1440 // 60:02d}:{minutes % 60:02d}:00Z"
        lux = light[i] if light is not None else 100.0
        lines.append(f"{stamp},bme680-{room},{room},office,1,{q},{q},{lux},35,3,3,1013,21")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def linear_csv(tmp_path):
    """AQI rising linearly, so the label is the current AQI plus a constant."""
    n = 2000
    return write_readings(tmp_path / "linear.csv", [40 + 0.01 * i for i in range(n)],
                          light=[float(i % 97) for i in range(n)])


@pytest.fixture
def noisy_csv(tmp_path):
    import edgefleet

    aqi = edgefleet.generate_room("A10", seed=3, days=7)
    return write_readings(tmp_path / "noisy.csv", [float(v) for v in aqi])
