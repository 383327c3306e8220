import numpy as np
import pytest

from rocketphm.ingest import RawTrajectory


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_trajectory(unit_id=1, n_cycles=50, seed=0, sensor_fn=None):
    """Synthetic RawTrajectory; sensor_fn(sensor_index, t) -> values."""
    rng = np.random.default_rng(seed)
    t = np.arange(1, n_cycles + 1)
    sensors = np.empty((21, n_cycles))
    for s in range(21):
        if sensor_fn is None:
            sensors[s] = rng.normal(s, 1.0, n_cycles)
        else:
            sensors[s] = sensor_fn(s, t)
    return RawTrajectory(
        unit_id=unit_id,
        cycles=t.astype(np.int64),
        op_settings=np.zeros((3, n_cycles)),
        sensors=sensors,
    )


@pytest.fixture
def cmapss_file(tmp_path):
    """Write a tiny hand-made CMAPSS-format file and return its path."""

    def _write(lines, name="train_FD001.txt"):
        path = tmp_path / name
        path.write_text("\n".join(lines) + ("\n" if lines else ""))
        return path

    return _write


def cmapss_line(unit, cycle, sensors=None, settings=(0.0, 0.0, 100.0)):
    sensors = sensors if sensors is not None else [float(s) for s in range(1, 22)]
    fields = [str(unit), str(cycle)] + [f"{v:.4f}" for v in settings] + [f"{v:.4f}" for v in sensors]
    return " ".join(fields)
