"""Dilated multivariate convolution plus PPV/MAX pooling.

The hot path is a numba kernel over (sample, kernel) tiles; output cells are
disjoint so results are independent of worker count. `convolve_naive` is the
slow triple-loop reference that defines correctness, and the optimized path
must match it to 1e-12.

Conventions: a kernel's response at position p is the dilated dot product
summed over its channel subset, with zero padding of ((len-1)*d)//2 per side
when padding is on (response length L) and no padding otherwise (length
L - (len-1)*d). PPV counts strictly positive response-plus-bias positions
over the response length; MAX is the plain response maximum. Both default
to 0 on an empty response so feature dimensionality stays fixed.
"""

from __future__ import annotations

import json
import warnings
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from numba import njit, prange

from .errors import ConfigError
from .ingest import TimeSeriesWindow
from .kernels import KernelBank, KernelSpec, feature_meta


def response_length(window_length: int, spec: KernelSpec) -> int:
    span = (spec.length - 1) * spec.dilation
    pad = span // 2 if spec.padding else 0
    return window_length + 2 * pad - span


def convolve(window: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Vectorized response of one kernel on one (m, L) window."""
    window = np.asarray(window, dtype=np.float64)
    n_positions = response_length(window.shape[1], spec)
    if n_positions <= 0:
        return np.empty(0)
    length = window.shape[1]
    pad = ((spec.length - 1) * spec.dilation) // 2 if spec.padding else 0
    out = np.zeros(n_positions)
    for c_idx, channel in enumerate(spec.channel_ids):
        x = window[channel]
        for j in range(spec.length):
            shift = j * spec.dilation - pad
            lo = max(0, -shift)
            hi = min(n_positions, length - shift)
            if lo < hi:
                out[lo:hi] += spec.weights[c_idx, j] * x[lo + shift : hi + shift]
    return out


def convolve_naive(window: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Triple-loop reference implementation; the correctness oracle."""
    length = window.shape[1]
    pad = ((spec.length - 1) * spec.dilation) // 2 if spec.padding else 0
    n_positions = response_length(length, spec)
    if n_positions <= 0:
        return np.empty(0)
    out = np.zeros(n_positions)
    for p in range(n_positions):
        acc = 0.0
        for c_idx, channel in enumerate(spec.channel_ids):
            for j in range(spec.length):
                idx = p - pad + j * spec.dilation
                if 0 <= idx < length:
                    acc += spec.weights[c_idx, j] * window[channel, idx]
        out[p] = acc
    return out


def pool_ppv(response: np.ndarray, bias: float) -> float:
    """Fraction of response positions strictly above -bias; 0 when empty."""
    if len(response) == 0:
        return 0.0
    return float(np.count_nonzero(response + bias > 0)) / len(response)


def pool_max(response: np.ndarray) -> float:
    """Global maximum of the response; 0 when empty."""
    if len(response) == 0:
        return 0.0
    return float(response.max())


@dataclass
class FeatureMatrix:
    values: np.ndarray                 # (n_samples, n_features)
    feature_meta: np.ndarray           # structured: kernel, kind, bias
    bank_ref: str                      # bank manifest hash
    labels: np.ndarray | None = None
    unit_ids: np.ndarray | None = None
    end_cycles: np.ndarray | None = None
    split: np.ndarray | None = None    # 0 train / 1 test per sample

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def rows(self, mask: np.ndarray) -> "FeatureMatrix":
        pick = lambda a: None if a is None else a[mask]
        return FeatureMatrix(
            self.values[mask], self.feature_meta, self.bank_ref,
            pick(self.labels), pick(self.unit_ids), pick(self.end_cycles), pick(self.split),
        )


@njit(cache=True, parallel=True, fastmath=True)
def _apply_rocket(X, lengths, dilations, paddings, channel_off, channels,
                  weight_off, weights, biases, out):  # pragma: no cover - jitted
    n_samples, _, n_time = X.shape
    n_kernels = lengths.shape[0]
    for s in prange(n_samples):
        for k in range(n_kernels):
            length = lengths[k]
            dilation = dilations[k]
            span = (length - 1) * dilation
            pad = span // 2 if paddings[k] == 1 else 0
            n_positions = n_time + 2 * pad - span
            if n_positions <= 0:
                out[s, 2 * k] = 0.0
                out[s, 2 * k + 1] = 0.0
                continue
            c_lo = channel_off[k]
            c_hi = channel_off[k + 1]
            w_base = weight_off[k]
            bias = biases[k]
            positive = 0
            best = -np.inf
            for p in range(n_positions):
                start = p - pad
                acc = 0.0
                if pad == 0:
                    for ci in range(c_lo, c_hi):
                        ch = channels[ci]
                        wb = w_base + (ci - c_lo) * length
                        idx = start
                        for j in range(length):
                            acc += weights[wb + j] * X[s, ch, idx]
                            idx += dilation
                else:
                    for ci in range(c_lo, c_hi):
                        ch = channels[ci]
                        wb = w_base + (ci - c_lo) * length
                        idx = start
                        for j in range(length):
                            if 0 <= idx < n_time:
                                acc += weights[wb + j] * X[s, ch, idx]
                            idx += dilation
                if acc > best:
                    best = acc
                if acc + bias > 0.0:
                    positive += 1
            out[s, 2 * k] = positive / n_positions
            out[s, 2 * k + 1] = best


@njit(cache=True, parallel=True, fastmath=True)
def _apply_minirocket(X, dilation_grid, taps, paddings, channel_off, channels,
                      bias_off, biases, feature_off, out):  # pragma: no cover - jitted
    n_samples, n_channels, n_time = X.shape
    n_dilations = dilation_grid.shape[0]
    n_patterns = taps.shape[0] // n_dilations
    half = (9 - 1) // 2
    for s in prange(n_samples):
        base_sum = np.empty((n_channels, n_time))
        for di in range(n_dilations):
            dilation = dilation_grid[di]
            pad = half * dilation
            # shared across all patterns of this dilation: minus the full
            # 9-tap dilated sum per channel, zero-padded at the borders
            for ch in range(n_channels):
                for p in range(n_time):
                    acc = 0.0
                    idx = p - pad
                    for j in range(9):
                        if 0 <= idx < n_time:
                            acc += X[s, ch, idx]
                        idx += dilation
                    base_sum[ch, p] = -acc
            for pi in range(n_patterns):
                k = di * n_patterns + pi
                off0 = (taps[k, 0] - half) * dilation
                off1 = (taps[k, 1] - half) * dilation
                off2 = (taps[k, 2] - half) * dilation
                if paddings[k] == 1:
                    lo, hi = 0, n_time
                else:
                    lo, hi = pad, n_time - pad
                f_base = feature_off[k]
                b_lo = bias_off[k]
                n_biases = bias_off[k + 1] - b_lo
                if hi <= lo:
                    for b in range(n_biases):
                        out[s, f_base + b] = 0.0
                    continue
                for b in range(n_biases):
                    out[s, f_base + b] = 0.0
                for p in range(lo, hi):
                    acc = 0.0
                    for ci in range(channel_off[k], channel_off[k + 1]):
                        ch = channels[ci]
                        acc += base_sum[ch, p]
                        i0 = p + off0
                        if 0 <= i0 < n_time:
                            acc += 3.0 * X[s, ch, i0]
                        i1 = p + off1
                        if 0 <= i1 < n_time:
                            acc += 3.0 * X[s, ch, i1]
                        i2 = p + off2
                        if 0 <= i2 < n_time:
                            acc += 3.0 * X[s, ch, i2]
                    for b in range(n_biases):
                        if acc + biases[b_lo + b] > 0.0:
                            out[s, f_base + b] += 1.0
                n_positions = hi - lo
                for b in range(n_biases):
                    out[s, f_base + b] /= n_positions


def as_window_array(windows) -> tuple[np.ndarray, np.ndarray | None, np.ndarray, np.ndarray]:
    """Stack windows into (values, labels, unit_ids, end_cycles) arrays."""
    if isinstance(windows, np.ndarray):
        if windows.ndim != 3:
            raise ConfigError(f"window array must be 3-D (n, m, L), got shape {windows.shape}")
        return np.ascontiguousarray(windows, dtype=np.float64), None, None, None
    windows = list(windows)
    if not windows:
        raise ConfigError("no windows to transform")
    shape = windows[0].values.shape
    for i, w in enumerate(windows):
        if w.values.shape != shape:
            raise ConfigError(
                f"window {i} (unit {w.unit_id}, end cycle {w.end_cycle}) has shape "
                f"{w.values.shape}, expected {shape}"
            )
    values = np.ascontiguousarray(np.stack([w.values for w in windows]), dtype=np.float64)
    labels = None
    if all(w.label is not None for w in windows):
        labels = np.array([w.label for w in windows], dtype=np.int64)
    units = np.array([w.unit_id for w in windows], dtype=np.int64)
    ends = np.array([w.end_cycle for w in windows], dtype=np.int64)
    return values, labels, units, ends


@contextmanager
def _thread_count(workers: int | None):
    if workers is None:
        yield
        return
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    previous = numba.get_num_threads()
    numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))
    try:
        yield
    finally:
        numba.set_num_threads(previous)


def transform_all(windows, bank: KernelBank, workers: int | None = None) -> FeatureMatrix:
    """Apply every kernel of the bank to every window.

    ``windows`` is either an (n, m, L) array or a list of TimeSeriesWindow;
    output feature order is fixed by the bank (PPV before MAX per ROCKET
    kernel, one PPV per bias for MiniROCKET).
    """
    if isinstance(windows, np.ndarray) or windows:
        values, labels, units, ends = as_window_array(windows)
    else:
        values = np.empty((0, bank.n_channels, bank.window_length))
        labels = units = ends = None
    if values.shape[1] != bank.n_channels or values.shape[2] != bank.window_length:
        raise ConfigError(
            f"window shape {values.shape[1:]} does not match bank input "
            f"({bank.n_channels}, {bank.window_length})"
        )
    packed = bank.packed()
    empty = [
        k for k, s in enumerate(bank.specs)
        if response_length(bank.window_length, s) <= 0
    ]
    if empty:
        warnings.warn(
            f"{len(empty)} kernels produce empty responses on length-"
            f"{bank.window_length} windows; their features default to 0",
            stacklevel=2,
        )
    out = np.zeros((values.shape[0], bank.n_features))
    if values.shape[0] > 0:
        with _thread_count(workers):
            if bank.variant == "rocket":
                _apply_rocket(
                    values, packed["lengths"], packed["dilations"], packed["paddings"],
                    packed["channel_off"], packed["channels"],
                    packed["weight_off"], packed["weights"], packed["biases"], out,
                )
            else:
                _apply_minirocket(
                    values, packed["dilation_grid"], packed["taps"], packed["paddings"],
                    packed["channel_off"], packed["channels"],
                    packed["bias_off"], packed["biases"], packed["feature_off"], out,
                )
    return FeatureMatrix(
        values=out,
        feature_meta=feature_meta(bank),
        bank_ref=bank.manifest_hash(),
        labels=labels,
        unit_ids=units,
        end_cycles=ends,
    )


def transform_features_naive(values: np.ndarray, bank: KernelBank) -> np.ndarray:
    """Reference transform built purely from the naive convolution oracle."""
    out = np.zeros((values.shape[0], bank.n_features))
    for s in range(values.shape[0]):
        pos = 0
        for spec in bank.specs:
            response = convolve_naive(values[s], spec)
            if bank.variant == "rocket":
                out[s, pos] = pool_ppv(response, float(spec.biases[0]))
                out[s, pos + 1] = pool_max(response)
                pos += 2
            else:
                for bias in spec.biases:
                    out[s, pos] = pool_ppv(response, float(bias))
                    pos += 1
    return out


def save_features(fm: FeatureMatrix, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {
        "values": fm.values,
        "meta_kernel": fm.feature_meta["kernel"],
        "meta_kind": fm.feature_meta["kind"],
        "meta_bias": fm.feature_meta["bias"],
        "bank_ref": np.frombuffer(fm.bank_ref.encode(), dtype=np.uint8),
    }
    for name in ("labels", "unit_ids", "end_cycles", "split"):
        arr = getattr(fm, name)
        if arr is not None:
            arrays[name] = arr
    np.savez_compressed(path, **arrays)
    return path


def load_features(path: str | Path) -> FeatureMatrix:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no feature file at {path}; run the transform step first")
    with np.load(path) as data:
        meta = np.empty(len(data["meta_kernel"]), dtype=[("kernel", "i4"), ("kind", "U3"), ("bias", "i4")])
        meta["kernel"] = data["meta_kernel"]
        meta["kind"] = data["meta_kind"]
        meta["bias"] = data["meta_bias"]
        optional = {
            name: data[name] if name in data else None
            for name in ("labels", "unit_ids", "end_cycles", "split")
        }
        return FeatureMatrix(
            values=data["values"],
            feature_meta=meta,
            bank_ref=bytes(data["bank_ref"]).decode(),
            **optional,
        )


def export_features_csv(fm: FeatureMatrix, path: str | Path) -> Path:
    """Flat CSV export (one row per sample) with a small JSON sidecar."""
    path = Path(path)
    header = [f"{m['kind']}_{m['kernel']}_{m['bias']}" for m in fm.feature_meta]
    cols = []
    names = []
    for name in ("unit_ids", "end_cycles", "split", "labels"):
        arr = getattr(fm, name)
        if arr is not None:
            cols.append(arr.astype(np.float64))
            names.append(name.rstrip("s") if name != "labels" else "label")
    data = np.column_stack(cols + [fm.values]) if cols else fm.values
    np.savetxt(path, data, delimiter=",", header=",".join(names + header), comments="")
    sidecar = {"bank_ref": fm.bank_ref, "n_samples": fm.n_samples, "n_features": fm.n_features}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return path
