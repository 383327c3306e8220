"""CMAPSS ingestion: parsing, sensor selection, standardization, windowing.

The turbofan text files are whitespace-delimited with 26 columns per line:
unit id, cycle, three operational settings, and 21 sensor readings. All
functions here are pure and operate on in-memory arrays; `save_cache` /
`load_cache` persist the standardized trajectories plus the window tensor
for the downstream stages.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, IntegrityError, ParseError

DATASET_IDS = ("FD001", "FD002", "FD003", "FD004")

SENSOR_NAMES = tuple(f"s{i}" for i in range(1, 22))

# The 14 informative sensors conventionally kept for turbofan degradation work.
DEFAULT_SENSORS = (
    "s2", "s3", "s4", "s7", "s8", "s9", "s11",
    "s12", "s13", "s14", "s15", "s17", "s20", "s21",
)

DEFAULT_WINDOW = 30
DEFAULT_STRIDE = 1
DEFAULT_TEST_FRACTION = 0.2

_STD_EPS = 1e-12

# Philox stream ids; kernel generation uses indices < 2**32 so these never collide.
_STREAM_SPLIT = np.uint64(1 << 48)


@dataclass
class RawTrajectory:
    """One engine unit's full run-to-failure record."""

    unit_id: int
    cycles: np.ndarray          # (T,) int, contiguous from 1
    op_settings: np.ndarray     # (3, T)
    sensors: np.ndarray         # (21, T)

    @property
    def n_cycles(self) -> int:
        return len(self.cycles)


@dataclass
class StandardizationStats:
    """Per-sensor Z-score statistics fitted on a training pool."""

    sensor_ids: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    substituted: np.ndarray     # bool mask where std fell below eps and was set to 1
    fitted_on: str = "train"


@dataclass
class TimeSeriesWindow:
    """A fixed-length multivariate slice ending at ``end_cycle``."""

    unit_id: int
    end_cycle: int
    values: np.ndarray          # (m, L)
    label: int | None = None


@dataclass
class IngestResult:
    """Standardized, split trajectories plus the configuration that made them."""

    dataset_id: str
    sensor_ids: tuple[str, ...]
    window_length: int
    stride: int
    test_fraction: float
    seed: int
    stats: StandardizationStats
    train: dict[int, np.ndarray] = field(default_factory=dict)   # unit -> (m, T)
    test: dict[int, np.ndarray] = field(default_factory=dict)
    source_path: str = ""
    source_sha256: str = ""

    @property
    def train_units(self) -> list[int]:
        return list(self.train)

    @property
    def test_units(self) -> list[int]:
        return list(self.test)


def parse_cmapss(path: str | Path, dataset_id: str) -> list[RawTrajectory]:
    """Parse one CMAPSS text file into per-unit trajectories.

    Raises ParseError on malformed lines (with the 1-based line number) and
    IntegrityError when a unit's cycle counter is not contiguous from 1.
    """
    if dataset_id not in DATASET_IDS:
        raise ConfigError(f"unknown dataset id {dataset_id!r}; expected one of {DATASET_IDS}")
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"data file not found: {path}")

    rows_by_unit: dict[int, list[np.ndarray]] = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 26:
                raise ParseError(
                    f"{path.name}:{line_no}: expected 26 fields, got {len(tokens)}"
                )
            try:
                values = np.array([float(t) for t in tokens], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"{path.name}:{line_no}: non-numeric field ({exc})") from None
            unit = int(values[0])
            if values[0] != unit or unit <= 0:
                raise ParseError(f"{path.name}:{line_no}: unit id must be a positive integer")
            rows_by_unit.setdefault(unit, []).append(values)

    trajectories = []
    for unit, rows in rows_by_unit.items():
        block = np.vstack(rows)
        cycles = block[:, 1]
        if not np.array_equal(cycles, np.arange(1, len(rows) + 1, dtype=np.float64)):
            raise IntegrityError(
                f"{path.name}: unit {unit} cycles are not contiguous from 1"
            )
        trajectories.append(
            RawTrajectory(
                unit_id=unit,
                cycles=cycles.astype(np.int64),
                op_settings=np.ascontiguousarray(block[:, 2:5].T),
                sensors=np.ascontiguousarray(block[:, 5:26].T),
            )
        )
    trajectories.sort(key=lambda t: t.unit_id)
    return trajectories


def _sensor_rows(sensor_ids) -> list[int]:
    rows = []
    for name in sensor_ids:
        if name not in SENSOR_NAMES:
            raise ConfigError(f"unknown sensor name {name!r}")
        rows.append(SENSOR_NAMES.index(name))
    return rows


def select_sensors(traj: RawTrajectory, sensor_ids=DEFAULT_SENSORS) -> np.ndarray:
    """Project a trajectory onto the named sensors, rows in the given order."""
    if len(sensor_ids) == 0:
        raise ConfigError("sensor selection is empty; at least one channel is required")
    return traj.sensors[_sensor_rows(sensor_ids), :]


def fit_standardizer(trajs, sensor_ids=DEFAULT_SENSORS, fitted_on: str = "train") -> StandardizationStats:
    """Fit per-sensor Z-score stats over all timesteps of all trajectories pooled.

    Uses the sample (n-1) std convention. Sensors with std below 1e-12 get
    std substituted by 1 so downstream scaling never divides by zero.
    """
    if not trajs:
        raise ConfigError("cannot fit standardizer on an empty trajectory list")
    pooled = np.concatenate([select_sensors(t, sensor_ids) for t in trajs], axis=1)
    if pooled.shape[1] < 2:
        raise ConfigError("standardizer needs at least 2 pooled samples per sensor")
    mean = pooled.mean(axis=1)
    std = pooled.std(axis=1, ddof=1)
    substituted = std < _STD_EPS
    if substituted.any():
        names = [sensor_ids[i] for i in np.flatnonzero(substituted)]
        warnings.warn(f"constant sensors {names}: std substituted by 1", stacklevel=2)
        std = np.where(substituted, 1.0, std)
    return StandardizationStats(tuple(sensor_ids), mean, std, substituted, fitted_on)


def apply_standardizer(traj: RawTrajectory, stats: StandardizationStats) -> np.ndarray:
    """Return the (m, T) standardized matrix for the stats' sensor set."""
    values = select_sensors(traj, stats.sensor_ids)
    return (values - stats.mean[:, None]) / stats.std[:, None]


def make_windows(
    values: np.ndarray,
    labels: np.ndarray | None = None,
    window_length: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    unit_id: int = 0,
    first_cycle: int = 1,
) -> list[TimeSeriesWindow]:
    """Slice an (m, T) matrix into windows ending at cycles L, L+stride, ... <= T.

    A window's label is the per-cycle label at its end cycle. Trajectories
    shorter than the window are skipped with a warning rather than failing.
    """
    if window_length < 2:
        raise ConfigError(f"window length must be >= 2, got {window_length}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    n_cycles = values.shape[1]
    if n_cycles < window_length:
        warnings.warn(
            f"unit {unit_id}: trajectory length {n_cycles} < window {window_length}; skipped",
            stacklevel=2,
        )
        return []
    windows = []
    for end in range(window_length - 1, n_cycles, stride):
        label = None if labels is None else int(labels[end])
        windows.append(
            TimeSeriesWindow(
                unit_id=unit_id,
                end_cycle=first_cycle + end,
                values=values[:, end - window_length + 1 : end + 1],
                label=label,
            )
        )
    return windows


def split_by_unit(trajs, test_fraction: float = DEFAULT_TEST_FRACTION, seed: int = 0):
    """Partition trajectories into disjoint train/test lists by unit id.

    Deterministic under the seed; raises ConfigError when either side
    would be empty.
    """
    if len(trajs) < 2:
        raise ConfigError("need at least 2 units to split")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test fraction must be in (0, 1), got {test_fraction}")
    n_test = int(round(len(trajs) * test_fraction))
    if n_test == 0 or n_test == len(trajs):
        raise ConfigError(
            f"test fraction {test_fraction} leaves an empty split for {len(trajs)} units"
        )
    ordered = sorted(trajs, key=lambda t: t.unit_id)
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, _STREAM_SPLIT], dtype=np.uint64)))
    perm = rng.permutation(len(ordered))
    test_idx = set(perm[:n_test].tolist())
    train = [t for i, t in enumerate(ordered) if i not in test_idx]
    test = [t for i, t in enumerate(ordered) if i in test_idx]
    return train, test


def ingest_dataset(
    data_dir: str | Path,
    dataset_id: str,
    sensor_ids=DEFAULT_SENSORS,
    window_length: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    seed: int = 0,
) -> IngestResult:
    """Run the full ingest stage for one sub-dataset's training file.

    Parses ``train_<dataset>.txt``, splits by unit, fits the standardizer on
    the training split only, and standardizes both splits with it.
    """
    path = Path(data_dir) / f"train_{dataset_id}.txt"
    trajs = parse_cmapss(path, dataset_id)
    if not trajs:
        raise ConfigError(f"{path} contains no trajectories")
    train_trajs, test_trajs = split_by_unit(trajs, test_fraction, seed)
    stats = fit_standardizer(train_trajs, sensor_ids)
    result = IngestResult(
        dataset_id=dataset_id,
        sensor_ids=tuple(sensor_ids),
        window_length=window_length,
        stride=stride,
        test_fraction=test_fraction,
        seed=seed,
        stats=stats,
        source_path=str(path),
        source_sha256=sha256_file(path),
    )
    for t in train_trajs:
        result.train[t.unit_id] = apply_standardizer(t, stats)
    for t in test_trajs:
        result.test[t.unit_id] = apply_standardizer(t, stats)
    return result


def build_window_arrays(result: IngestResult, labels_by_unit: dict[int, np.ndarray] | None = None):
    """Stack all windows of an ingest result into flat arrays.

    Returns (values (n, m, L), labels (n,) or None, unit_ids, end_cycles,
    split) where split is 0 for train units and 1 for test units.
    """
    values, labels, units, ends, split = [], [], [], [], []
    have_labels = labels_by_unit is not None
    for flag, group in ((0, result.train), (1, result.test)):
        for unit, mat in group.items():
            unit_labels = labels_by_unit.get(unit) if have_labels else None
            if have_labels and unit_labels is None:
                raise ConfigError(f"no labels for unit {unit}")
            for w in make_windows(mat, unit_labels, result.window_length, result.stride, unit):
                values.append(w.values)
                units.append(w.unit_id)
                ends.append(w.end_cycle)
                split.append(flag)
                if have_labels:
                    labels.append(w.label)
    m = len(result.sensor_ids)
    arr = (
        np.stack(values)
        if values
        else np.empty((0, m, result.window_length), dtype=np.float64)
    )
    return (
        arr,
        np.array(labels, dtype=np.int64) if have_labels else None,
        np.array(units, dtype=np.int64),
        np.array(ends, dtype=np.int64),
        np.array(split, dtype=np.uint8),
    )


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_cache(result: IngestResult, out_dir: str | Path) -> Path:
    """Persist an ingest result: windows + trajectories (npz) and a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": 1,
        "dataset_id": result.dataset_id,
        "sensor_ids": list(result.sensor_ids),
        "window_length": result.window_length,
        "stride": result.stride,
        "test_fraction": result.test_fraction,
        "seed": result.seed,
        "train_units": result.train_units,
        "test_units": result.test_units,
        "source_path": result.source_path,
        "source_sha256": result.source_sha256,
        "standardization": {
            "sensor_ids": list(result.stats.sensor_ids),
            "mean": result.stats.mean.tolist(),
            "std": result.stats.std.tolist(),
            "substituted": result.stats.substituted.astype(int).tolist(),
            "fitted_on": result.stats.fitted_on,
        },
    }
    (out / "ingest_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    win_values, _, win_units, win_ends, win_split = build_window_arrays(result)
    arrays = {
        "win_values": win_values,
        "win_units": win_units,
        "win_ends": win_ends,
        "win_split": win_split,
    }
    for unit, mat in result.train.items():
        arrays[f"traj_{unit}"] = mat
    for unit, mat in result.test.items():
        arrays[f"traj_{unit}"] = mat
    np.savez_compressed(out / "windows.npz", **arrays)
    return out


def load_cache(cache_dir: str | Path) -> IngestResult:
    cache = Path(cache_dir)
    manifest_path = cache / "ingest_manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no ingest cache at {cache}; run the ingest step first")
    manifest = json.loads(manifest_path.read_text())
    st = manifest["standardization"]
    stats = StandardizationStats(
        sensor_ids=tuple(st["sensor_ids"]),
        mean=np.array(st["mean"], dtype=np.float64),
        std=np.array(st["std"], dtype=np.float64),
        substituted=np.array(st["substituted"], dtype=bool),
        fitted_on=st["fitted_on"],
    )
    result = IngestResult(
        dataset_id=manifest["dataset_id"],
        sensor_ids=tuple(manifest["sensor_ids"]),
        window_length=manifest["window_length"],
        stride=manifest["stride"],
        test_fraction=manifest["test_fraction"],
        seed=manifest["seed"],
        stats=stats,
        source_path=manifest["source_path"],
        source_sha256=manifest["source_sha256"],
    )
    with np.load(cache / "windows.npz") as data:
        for unit in manifest["train_units"]:
            result.train[unit] = data[f"traj_{unit}"]
        for unit in manifest["test_units"]:
            result.test[unit] = data[f"traj_{unit}"]
    return result
