"""Random convolutional kernel banks.

Two variants share one bank format. ROCKET samples every hyperparameter per
kernel: length in {7, 9, 11}, standard-normal weights (mean-centered per
kernel), bias uniform on [-1, 1], log-uniform dilation, coin-flip padding,
and emits PPV + MAX per kernel. MiniROCKET fixes length 9 and two-valued
weights (six taps of -1, three of +2, one pattern per 3-of-9 combination),
walks a fixed exponential dilation grid, alternates padding, draws biases
from quantiles of a real convolution output, and emits PPV only.

Every random draw comes from a counter-based Philox stream keyed by
(seed, kernel index), so banks regenerate bit-identically from their
manifest and generation order does not matter.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import ConfigError

ROCKET_LENGTHS = (7, 9, 11)
MINIROCKET_LENGTH = 9
MINIROCKET_PATTERNS = tuple(combinations(range(MINIROCKET_LENGTH), 3))  # 84 of them
_MAX_DILATIONS_PER_PATTERN = 32

BANK_FORMAT_VERSION = 1


@dataclass
class KernelSpec:
    length: int
    channel_ids: np.ndarray      # sorted, duplicate-free subset of input channels
    weights: np.ndarray          # (n_channels, length)
    biases: np.ndarray           # (1,) for ROCKET, (n_biases,) for MiniROCKET
    dilation: int
    padding: bool
    features: tuple[str, ...]    # ("ppv", "max") or ("ppv",)

    @property
    def n_features(self) -> int:
        return len(self.features) if len(self.biases) <= 1 else len(self.biases)


@dataclass
class KernelBank:
    variant: str                 # "rocket" | "minirocket"
    seed: int
    n_channels: int
    window_length: int
    specs: list[KernelSpec]
    count: int                   # requested kernel count / target feature count
    bias_window_ids: np.ndarray | None = None   # minirocket: window used per kernel
    taps: np.ndarray | None = None              # minirocket: (K, 3) +2 tap indices
    dilation_grid: np.ndarray | None = None     # minirocket: distinct dilations
    _packed: dict = field(default_factory=dict, repr=False)

    @property
    def n_kernels(self) -> int:
        return len(self.specs)

    @property
    def n_features(self) -> int:
        if self.variant == "rocket":
            return 2 * len(self.specs)
        return int(sum(len(s.biases) for s in self.specs))

    def manifest(self) -> dict:
        doc = {
            "format_version": BANK_FORMAT_VERSION,
            "variant": self.variant,
            "seed": self.seed,
            "n_channels": self.n_channels,
            "window_length": self.window_length,
            "count": self.count,
        }
        if self.variant == "minirocket":
            doc["bias_window_ids"] = self.bias_window_ids.tolist()
        return doc

    def manifest_hash(self) -> str:
        blob = json.dumps(self.manifest(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def packed(self) -> dict:
        """Flat arrays for the transform hot path; cached after first call."""
        if not self._packed:
            self._packed = _pack(self)
        return self._packed


def _kernel_rng(seed: int, index: int) -> np.random.Generator:
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw_channels(rng: np.random.Generator, n_channels: int) -> np.ndarray:
    max_exp = int(np.floor(np.log2(n_channels)))
    size = 2 ** int(rng.integers(0, max_exp + 1))
    picked = rng.permutation(n_channels)[:size]
    return np.sort(picked).astype(np.int64)


def generate_rocket(count: int, n_channels: int, window_length: int, seed: int) -> KernelBank:
    """Generate a ROCKET bank; deterministic and order-independent per kernel."""
    if count < 1:
        raise ConfigError(f"kernel count must be >= 1, got {count}")
    if n_channels < 1:
        raise ConfigError("need at least one input channel")
    if window_length < max(ROCKET_LENGTHS) + 1:
        raise ConfigError(
            f"window length {window_length} too short; the longest kernel needs "
            f">= {max(ROCKET_LENGTHS) + 1} timesteps"
        )
    specs = []
    for i in range(count):
        rng = _kernel_rng(seed, i)
        length = ROCKET_LENGTHS[int(rng.integers(0, len(ROCKET_LENGTHS)))]
        channels = _draw_channels(rng, n_channels)
        weights = rng.standard_normal((len(channels), length))
        weights -= weights.mean()
        bias = rng.uniform(-1.0, 1.0)
        max_exp = np.log2((window_length - 1) / (length - 1))
        dilation = int(2 ** rng.uniform(0.0, max_exp))
        padding = bool(rng.integers(0, 2))
        specs.append(
            KernelSpec(
                length=length,
                channel_ids=channels,
                weights=weights,
                biases=np.array([bias]),
                dilation=dilation,
                padding=padding,
                features=("ppv", "max"),
            )
        )
    return KernelBank("rocket", seed, n_channels, window_length, specs, count)


def _minirocket_dilations(window_length: int, target_features: int):
    """Exponential dilation grid plus the bias count each dilation gets."""
    per_pattern = target_features // len(MINIROCKET_PATTERNS)
    n_dilations = min(per_pattern, _MAX_DILATIONS_PER_PATTERN)
    max_exp = np.log2((window_length - 1) / (MINIROCKET_LENGTH - 1))
    raw = np.logspace(0, max_exp, n_dilations, base=2.0).astype(np.int64)
    dilations, counts = np.unique(raw, return_counts=True)
    biases_per_dilation = (counts * (per_pattern / n_dilations)).astype(np.int64)
    remainder = per_pattern - int(biases_per_dilation.sum())
    i = 0
    while remainder > 0:
        biases_per_dilation[i] += 1
        remainder -= 1
        i = (i + 1) % len(biases_per_dilation)
    return dilations, biases_per_dilation


def generate_minirocket(
    target_features: int,
    n_channels: int,
    window_length: int,
    seed: int,
    bias_windows: np.ndarray,
) -> KernelBank:
    """Generate a MiniROCKET bank, sampling biases from real training windows.

    ``bias_windows`` is an (n, m, L) array of standardized training windows;
    one seeded-random window is convolved per (pattern, dilation) pair and
    its output quantiles, evenly spaced in probability, become that kernel's
    biases (stored negated so pooling can add them). Feature count comes out
    within one pattern-grid row of ``target_features``.
    """
    from .transform import convolve  # local import; transform depends on this module

    if target_features < len(MINIROCKET_PATTERNS):
        raise ConfigError(
            f"target_features must be >= {len(MINIROCKET_PATTERNS)} (one bias per pattern)"
        )
    if window_length < MINIROCKET_LENGTH:
        raise ConfigError(f"window length {window_length} below kernel length {MINIROCKET_LENGTH}")
    bias_windows = np.asarray(bias_windows, dtype=np.float64)
    if bias_windows.ndim != 3 or bias_windows.shape[0] == 0:
        raise ConfigError("bias_windows must be a non-empty (n, m, L) array")
    if bias_windows.shape[1] != n_channels or bias_windows.shape[2] != window_length:
        raise ConfigError(
            f"bias_windows shape {bias_windows.shape[1:]} does not match "
            f"(n_channels={n_channels}, window_length={window_length})"
        )

    dilations, biases_per_dilation = _minirocket_dilations(window_length, target_features)
    specs = []
    window_ids = []
    taps = []
    combo = 0
    for d_idx, dilation in enumerate(dilations):
        n_biases = int(biases_per_dilation[d_idx])
        for pattern in MINIROCKET_PATTERNS:
            rng = _kernel_rng(seed, combo)
            channels = _draw_channels(rng, n_channels)
            window_id = int(rng.integers(0, bias_windows.shape[0]))
            padding = combo % 2 == 0
            weights = np.full((len(channels), MINIROCKET_LENGTH), -1.0)
            weights[:, list(pattern)] = 2.0
            spec = KernelSpec(
                length=MINIROCKET_LENGTH,
                channel_ids=channels,
                weights=weights,
                biases=np.empty(0),
                dilation=int(dilation),
                padding=padding,
                features=("ppv",),
            )
            response = convolve(bias_windows[window_id], spec)
            quantiles = np.quantile(response, np.arange(1, n_biases + 1) / (n_biases + 1))
            # Quantiles can land exactly on a response value of the sampled
            # window; nudge below so the strict > 0 pooling test resolves
            # ties identically under any floating-point summation order.
            spec.biases = -(quantiles + 1e-9 * (1.0 + np.abs(quantiles)))
            specs.append(spec)
            window_ids.append(window_id)
            taps.append(pattern)
            combo += 1
    return KernelBank(
        "minirocket",
        seed,
        n_channels,
        window_length,
        specs,
        target_features,
        bias_window_ids=np.array(window_ids, dtype=np.int64),
        taps=np.array(taps, dtype=np.int64),
        dilation_grid=dilations,
    )


def regenerate_bank(manifest: dict, bias_windows: np.ndarray | None = None) -> KernelBank:
    """Rebuild a bank bit-identically from its manifest.

    MiniROCKET banks additionally need the same training-window array the
    original generation used (the manifest's window ids are re-derived from
    the seed and verified).
    """
    if manifest.get("format_version") != BANK_FORMAT_VERSION:
        raise ConfigError(f"unsupported bank format version {manifest.get('format_version')}")
    variant = manifest["variant"]
    if variant == "rocket":
        return generate_rocket(
            manifest["count"], manifest["n_channels"], manifest["window_length"], manifest["seed"]
        )
    if variant == "minirocket":
        if bias_windows is None:
            raise ConfigError("minirocket regeneration needs the bias-sample windows")
        bank = generate_minirocket(
            manifest["count"],
            manifest["n_channels"],
            manifest["window_length"],
            manifest["seed"],
            bias_windows,
        )
        if manifest.get("bias_window_ids") is not None and not np.array_equal(
            bank.bias_window_ids, np.array(manifest["bias_window_ids"])
        ):
            raise ConfigError("bias-sample window ids do not match the manifest")
        return bank
    raise ConfigError(f"unknown bank variant {variant!r}")


def _pack(bank: KernelBank) -> dict:
    K = bank.n_kernels
    lengths = np.array([s.length for s in bank.specs], dtype=np.int64)
    dilations = np.array([s.dilation for s in bank.specs], dtype=np.int64)
    paddings = np.array([1 if s.padding else 0 for s in bank.specs], dtype=np.uint8)
    channel_off = np.zeros(K + 1, dtype=np.int64)
    bias_off = np.zeros(K + 1, dtype=np.int64)
    feature_off = np.zeros(K + 1, dtype=np.int64)
    weight_off = np.zeros(K + 1, dtype=np.int64)
    for i, s in enumerate(bank.specs):
        channel_off[i + 1] = channel_off[i] + len(s.channel_ids)
        bias_off[i + 1] = bias_off[i] + len(s.biases)
        feature_off[i + 1] = feature_off[i] + s.n_features
        weight_off[i + 1] = weight_off[i] + s.weights.size
    packed = {
        "lengths": lengths,
        "dilations": dilations,
        "paddings": paddings,
        "channel_off": channel_off,
        "channels": np.concatenate([s.channel_ids for s in bank.specs]),
        "weight_off": weight_off,
        "weights": np.concatenate([s.weights.ravel() for s in bank.specs]),
        "bias_off": bias_off,
        "biases": np.concatenate([s.biases for s in bank.specs]),
        "feature_off": feature_off,
    }
    if bank.variant == "minirocket":
        packed["taps"] = bank.taps
        packed["dilation_grid"] = bank.dilation_grid
    return packed


def feature_meta(bank: KernelBank) -> np.ndarray:
    """Per-feature provenance: (kernel index, pooling kind, bias index)."""
    meta = np.empty(bank.n_features, dtype=[("kernel", "i4"), ("kind", "U3"), ("bias", "i4")])
    pos = 0
    for k, spec in enumerate(bank.specs):
        if bank.variant == "rocket":
            meta[pos] = (k, "ppv", 0)
            meta[pos + 1] = (k, "max", 0)
            pos += 2
        else:
            for b in range(len(spec.biases)):
                meta[pos] = (k, "ppv", b)
                pos += 1
    return meta


def save_bank(bank: KernelBank, path: str | Path) -> Path:
    """Write the manifest (JSON) plus a full .npz audit copy of the arrays."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(bank.manifest(), indent=2, sort_keys=True))
    arrays = {k: v for k, v in bank.packed().items()}
    arrays["manifest_json"] = np.frombuffer(
        json.dumps(bank.manifest(), sort_keys=True).encode(), dtype=np.uint8
    )
    np.savez_compressed(path.with_suffix(".npz"), **arrays)
    return path


def load_manifest(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no kernel-bank manifest at {path}")
    return json.loads(path.read_text())


def banks_identical(a: KernelBank, b: KernelBank) -> bool:
    """Byte-level equality of two banks' packed arrays."""
    pa, pb = a.packed(), b.packed()
    if set(pa) != set(pb):
        return False
    return all(
        pa[k].tobytes() == pb[k].tobytes() and pa[k].dtype == pb[k].dtype for k in pa
    )
