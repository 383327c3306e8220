"""Synthetic turbofan degradation data in the CMAPSS text-file format.

Produces `train_FD00X.txt` files with the usual 26 columns (unit, cycle,
three settings, 21 sensors) for demos and for exercising the pipeline when
the real NASA files are not on disk. The generator mirrors the structural
traits of the four sub-datasets: FD001 has one operating condition and one
fault mode, FD002 adds six operating regimes, FD003 two fault modes, and
FD004 both. Degradation follows a power-law wear curve per unit with
sensor-specific trend directions, regime offsets, and Gaussian noise.

This is stand-in data: magnitudes are plausible but the files are not the
NASA simulation output.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError
from .ingest import DATASET_IDS, SENSOR_NAMES

# Typical cruise-point magnitudes and spreads, loosely matching the real files.
_BASE = {
    "s1": 518.67, "s2": 642.0, "s3": 1587.0, "s4": 1400.0, "s5": 14.62,
    "s6": 21.61, "s7": 554.0, "s8": 2388.0, "s9": 9050.0, "s10": 1.30,
    "s11": 47.5, "s12": 521.7, "s13": 2388.1, "s14": 8130.0, "s15": 8.44,
    "s16": 0.03, "s17": 392.0, "s18": 2388.0, "s19": 100.0, "s20": 38.9,
    "s21": 23.35,
}
_SCALE = {
    "s2": 0.5, "s3": 6.0, "s4": 9.0, "s7": 0.9, "s8": 0.07, "s9": 22.0,
    "s11": 0.27, "s12": 0.74, "s13": 0.07, "s14": 19.0, "s15": 0.037,
    "s17": 1.5, "s20": 0.18, "s21": 0.11,
    # near-constant housekeeping channels
    "s1": 0.0, "s5": 0.0, "s6": 0.001, "s10": 0.0, "s16": 0.0, "s18": 0.0,
    "s19": 0.0,
}

# Signed trend strengths over one full life, per fault mode. Informativeness
# is deliberately uneven, as in the real sensor suite: a few channels carry
# most of the degradation signal and the rest drift only faintly. Mode A
# mimics a compressor-efficiency loss, mode B a fan/turbine signature with
# several channels pulling the other way.
_TREND_A = {
    "s2": 0.45, "s3": 0.35, "s4": 1.40, "s7": -1.10, "s8": 0.08, "s9": 0.12,
    "s11": 1.30, "s12": -1.20, "s13": 0.06, "s14": 0.10, "s15": 0.50,
    "s17": 0.15, "s20": -0.40, "s21": -0.45,
}
_TREND_B = {
    "s2": 0.20, "s3": 0.45, "s4": 0.70, "s7": -0.40, "s8": -0.85, "s9": -1.25,
    "s11": 0.50, "s12": -0.30, "s13": -0.90, "s14": -1.30, "s15": 0.30,
    "s17": 0.12, "s20": -0.20, "s21": -0.15,
}

_REGIME_SETTINGS = (
    (0.0, 0.0, 100.0),
    (10.0, 0.25, 100.0),
    (20.0, 0.70, 100.0),
    (25.0, 0.62, 60.0),
    (35.0, 0.84, 100.0),
    (42.0, 0.84, 100.0),
)

_DATASET_TRAITS = {
    "FD001": {"regimes": 1, "modes": ("A",)},
    "FD002": {"regimes": 6, "modes": ("A",)},
    "FD003": {"regimes": 1, "modes": ("A", "B")},
    "FD004": {"regimes": 6, "modes": ("A", "B")},
}

_TREND_GAIN = 5.2
_NOISE_GAIN = 0.2

_REGIME_GAIN = 1.8
_WEAR_EXPONENT = 1.5

# Operating regimes are sampled with realistic skew: cruise points dominate.
_REGIME_PROBS = (0.30, 0.25, 0.20, 0.12, 0.08, 0.05)

_STREAM_REGIME_TABLE = 424242


def _regime_offsets() -> np.ndarray:
    """Fixed (6, 21) table of per-regime sensor offsets in scale units.

    The offset patterns are projected off both fault modes' trend
    directions, so regime switching moves the sensors in directions that
    carry no degradation information (it inflates within-class scatter
    without polluting the fused health index).
    """
    rng = np.random.Generator(
        np.random.Philox(key=np.array([_STREAM_REGIME_TABLE, 0], dtype=np.uint64))
    )
    table = rng.uniform(-1.0, 1.0, size=(len(_REGIME_SETTINGS), len(SENSOR_NAMES)))
    trends = np.zeros((2, len(SENSOR_NAMES)))
    for idx, name in enumerate(SENSOR_NAMES):
        if name not in _TREND_A:
            table[:, idx] = 0.0
        else:
            trends[0, idx] = _TREND_A[name]
            trends[1, idx] = _TREND_B[name]
    basis, _ = np.linalg.qr(trends.T)
    table -= (table @ basis) @ basis.T
    return table


_REGIME_TABLE = _regime_offsets()


def _unit_rng(dataset_id: str, seed: int, unit: int) -> np.random.Generator:
    stream = (DATASET_IDS.index(dataset_id) << 40) + unit
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


def synthesize_unit(dataset_id: str, seed: int, unit: int, min_cycles: int, max_cycles: int) -> np.ndarray:
    """One unit's rows as a (T, 26) array."""
    traits = _DATASET_TRAITS[dataset_id]
    rng = _unit_rng(dataset_id, seed, unit)
    n_cycles = int(rng.integers(min_cycles, max_cycles + 1))
    mode = traits["modes"][int(rng.integers(0, len(traits["modes"])))]
    trend_table = _TREND_A if mode == "A" else _TREND_B
    unit_gain = rng.uniform(0.995, 1.005)
    sensor_jitter = rng.uniform(0.995, 1.005, size=len(SENSOR_NAMES))

    # All units follow one power-law wear clock; lifetimes differ because
    # each unit is retired at its own failure threshold (its cycle count),
    # so short-lived units simply leave the fleet less degraded.
    t = np.arange(1, n_cycles + 1)
    wear = (t / max_cycles) ** _WEAR_EXPONENT
    if traits["regimes"] > 1:
        regimes = rng.choice(traits["regimes"], size=n_cycles, p=np.array(_REGIME_PROBS))
    else:
        regimes = np.zeros(n_cycles, dtype=np.int64)

    rows = np.zeros((n_cycles, 26))
    rows[:, 0] = unit
    rows[:, 1] = t
    settings = np.array([_REGIME_SETTINGS[r] for r in regimes])
    rows[:, 2] = settings[:, 0] + rng.normal(0.0, 0.0023, n_cycles)
    rows[:, 3] = settings[:, 1] + rng.normal(0.0, 0.0003, n_cycles)
    rows[:, 4] = settings[:, 2]

    for s_idx, name in enumerate(SENSOR_NAMES):
        base = _BASE[name]
        scale = _SCALE[name]
        trend = trend_table.get(name, 0.0) * unit_gain * sensor_jitter[s_idx]
        signal = (
            _TREND_GAIN * trend * wear
            + _REGIME_GAIN * _REGIME_TABLE[regimes, s_idx]
            + _NOISE_GAIN * rng.standard_normal(n_cycles)
        )
        rows[:, 5 + s_idx] = base + scale * signal
    return rows


def write_train_file(
    data_dir: str | Path,
    dataset_id: str,
    n_units: int = 50,
    seed: int = 0,
    min_cycles: int = 100,
    max_cycles: int = 200,
) -> Path:
    """Write `train_<dataset>.txt` for one sub-dataset; returns the path."""
    if dataset_id not in DATASET_IDS:
        raise ConfigError(f"unknown dataset id {dataset_id!r}; expected one of {DATASET_IDS}")
    if n_units < 2:
        raise ConfigError("need at least 2 units")
    if not 2 <= min_cycles <= max_cycles:
        raise ConfigError(f"bad cycle range [{min_cycles}, {max_cycles}]")
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    path = data_dir / f"train_{dataset_id}.txt"
    with open(path, "w") as fh:
        for unit in range(1, n_units + 1):
            for row in synthesize_unit(dataset_id, seed, unit, min_cycles, max_cycles):
                fields = [f"{int(row[0])}", f"{int(row[1])}"]
                fields += [f"{v:.4f}" for v in row[2:5]]
                fields += [f"{v:.4f}" for v in row[5:]]
                fh.write(" ".join(fields) + "\n")
    return path


def write_demo_corpus(
    data_dir: str | Path,
    datasets=DATASET_IDS,
    n_units: int = 50,
    seed: int = 0,
    min_cycles: int = 100,
    max_cycles: int = 200,
) -> list[Path]:
    return [
        write_train_file(data_dir, ds, n_units, seed, min_cycles, max_cycles)
        for ds in datasets
    ]
