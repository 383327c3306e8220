"""Health-status label construction.

Per engine unit the pipeline goes: fuse the standardized sensors into a
scalar health index with the first principal component, smooth it with a
Savitzky-Golay filter, fit a Weibull failure-rate (hazard) curve to the
smoothed series, and segment the fitted curve's slope into ordered stages
using pooled slope quantiles so the stages come out roughly balanced.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import ConfigError, SegmentationError

DEFAULT_CLASSES = 4
DEFAULT_SG_WINDOW = 21
DEFAULT_SG_ORDER = 3

# Multi-start grid for the hazard-curve fit: shape values spanning
# decreasing/constant/increasing hazard, scale values tied to series length.
_WEIBULL_SHAPE_STARTS = (0.5, 1.0, 2.0, 3.0)
_MAX_FIT_ITER = 500
_FIT_GTOL = 1e-8


@dataclass
class WeibullCurveFit:
    """Parameters of hi(t) = offset - amplitude * hazard(t; shape, scale)."""

    shape: float
    scale: float
    amplitude: float
    offset: float
    sse: float


@dataclass
class HealthIndexCurve:
    unit_id: int
    hi_raw: np.ndarray
    hi_smooth: np.ndarray
    hi_fit: np.ndarray
    weibull: WeibullCurveFit | None      # None when the fit fell back to hi_smooth


@dataclass
class HSLabeling:
    unit_id: int
    labels: np.ndarray                   # (T,) ints in {0..c-1}, non-decreasing
    thresholds: np.ndarray               # (c-1,) slope cut points
    class_counts: np.ndarray             # (c,) tallies for this unit


@dataclass
class PCAFusion:
    """First-principal-component direction fitted on pooled training data."""

    mean: np.ndarray       # (m,) pooled per-channel mean
    direction: np.ndarray  # (m,) unit vector, oriented so health degrades downward

    def project(self, matrix: np.ndarray) -> np.ndarray:
        """Per-cycle HI scores for one (m, T) standardized trajectory."""
        return self.direction @ (matrix - self.mean[:, None])


def _edge_mean(series: np.ndarray, head: bool, fraction: float = 0.05) -> float:
    n = max(1, int(round(len(series) * fraction)))
    return float(series[:n].mean() if head else series[-n:].mean())


def fit_pca_fusion(train_matrices) -> PCAFusion:
    """Fit the fusion direction on all training units' cycles pooled.

    The component of the largest covariance eigenvalue is used even when the
    covariance is rank deficient; the sign is chosen so that, summed over the
    training units, the HI's last-5%-of-cycles mean sits below its
    first-5%-of-cycles mean.
    """
    train_matrices = list(train_matrices)
    if not train_matrices:
        raise ConfigError("PCA fusion needs at least one training trajectory")
    pooled = np.concatenate(train_matrices, axis=1)
    if pooled.shape[1] < pooled.shape[0] + 1:
        raise ConfigError("PCA fusion needs more pooled cycles than channels")
    mean = pooled.mean(axis=1)
    centered = pooled - mean[:, None]
    cov = (centered @ centered.T) / (pooled.shape[1] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    direction = eigvecs[:, -1]
    fusion = PCAFusion(mean=mean, direction=direction)
    drift = sum(
        _edge_mean(fusion.project(m), head=False) - _edge_mean(fusion.project(m), head=True)
        for m in train_matrices
    )
    if drift > 0:
        fusion.direction = -direction
    return fusion


def fuse_pca(matrix: np.ndarray, fit_pool) -> np.ndarray:
    """Convenience: fit the fusion on the pool, then project one trajectory."""
    return fit_pca_fusion(fit_pool).project(matrix)


def _polyfit_weights(offsets: np.ndarray, polyorder: int) -> np.ndarray:
    # Row 0 of the pseudoinverse of the Vandermonde matrix evaluates the
    # least-squares polynomial at offset 0.
    vander = np.vander(offsets.astype(np.float64), polyorder + 1, increasing=True)
    return np.linalg.pinv(vander)[0]


def sg_smooth(series: np.ndarray, window: int = DEFAULT_SG_WINDOW, polyorder: int = DEFAULT_SG_ORDER) -> np.ndarray:
    """Savitzky-Golay smoothing with truncated one-sided windows at the edges.

    Every output point is the value at that point of a least-squares
    polynomial fitted over the window, so polynomials of degree <= polyorder
    pass through unchanged. Series shorter than the window shrink the window
    (and, if necessary, the polynomial order) with a warning.
    """
    series = np.asarray(series, dtype=np.float64)
    n = len(series)
    if n == 0:
        return series.copy()
    if window % 2 == 0:
        raise ConfigError(f"S-G window must be odd, got {window}")
    if window <= polyorder:
        raise ConfigError(f"S-G window {window} must exceed polyorder {polyorder}")
    if n < window:
        window = n if n % 2 == 1 else n - 1
        if window <= polyorder:
            polyorder = max(window - 1, 0)
        warnings.warn(
            f"series length {n} below S-G window; reduced to window={window}, order={polyorder}",
            stacklevel=2,
        )
    if window < 1:
        return series.copy()

    half = window // 2
    out = np.empty_like(series)
    interior = _polyfit_weights(np.arange(-half, half + 1), polyorder)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        if hi - lo == window:
            out[i] = interior @ series[lo:hi]
        else:
            weights = _polyfit_weights(np.arange(lo - i, hi - i), polyorder)
            out[i] = weights @ series[lo:hi]
    return out


def weibull_hazard(t: np.ndarray, shape: float, scale: float) -> np.ndarray:
    """Failure-rate function (shape/scale) * (t/scale)^(shape-1) for t > 0."""
    t = np.asarray(t, dtype=np.float64)
    if not (np.isfinite(shape) and np.isfinite(scale)) or shape <= 0 or scale <= 0:
        return np.full_like(t, np.inf)
    log_h = (
        np.log(shape)
        - np.log(scale)
        + (shape - 1.0) * (np.log(t) - np.log(scale))
    )
    return np.exp(np.clip(log_h, -745.0, 700.0))


def _solve_linear_part(h: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    # For fixed hazard values the model offset - amplitude*h is linear.
    design = np.column_stack([np.ones_like(h), -h])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(coef[0]), float(coef[1])


def fit_weibull_curve(hi_smooth: np.ndarray, t: np.ndarray | None = None):
    """Least-squares fit of hi(t) ~ offset - amplitude * hazard(t; shape, scale).

    Runs a small multi-start grid over (shape, scale), refining each start
    with damped least squares on (log shape, log scale) while the linear
    (offset, amplitude) pair is solved exactly per evaluation. Returns the
    best WeibullCurveFit and the fitted series; if every start fails the
    smoothed series itself is returned with a warning and fit=None.
    """
    y = np.asarray(hi_smooth, dtype=np.float64)
    if len(y) < 8:
        raise ConfigError(f"Weibull curve fit needs >= 8 points, got {len(y)}")
    if t is None:
        t = np.arange(1, len(y) + 1, dtype=np.float64)
    else:
        t = np.asarray(t, dtype=np.float64)

    def residuals(log_params):
        shape, scale = np.exp(log_params)
        h = weibull_hazard(t, shape, scale)
        if not np.all(np.isfinite(h)):
            return np.full_like(y, 1e6)
        offset, amplitude = _solve_linear_part(h, y)
        return (offset - amplitude * h) - y

    horizon = float(t[-1])
    best: WeibullCurveFit | None = None
    for shape0 in _WEIBULL_SHAPE_STARTS:
        for scale0 in (horizon / 2.0, horizon):
            try:
                sol = least_squares(
                    residuals,
                    x0=np.log([shape0, scale0]),
                    method="lm",
                    gtol=_FIT_GTOL,
                    max_nfev=_MAX_FIT_ITER,
                )
            except Exception:
                continue
            if not np.all(np.isfinite(sol.x)):
                continue
            shape, scale = np.exp(sol.x)
            h = weibull_hazard(t, shape, scale)
            if not np.all(np.isfinite(h)):
                continue
            offset, amplitude = _solve_linear_part(h, y)
            sse = float(np.sum(((offset - amplitude * h) - y) ** 2))
            if best is None or sse < best.sse:
                best = WeibullCurveFit(float(shape), float(scale), amplitude, offset, sse)

    if best is None:
        warnings.warn("Weibull curve fit failed on all starts; using smoothed HI", stacklevel=2)
        return None, y.copy()
    hi_fit = best.offset - best.amplitude * weibull_hazard(t, best.shape, best.scale)
    return best, hi_fit


def curve_slopes(hi_fit: np.ndarray) -> np.ndarray:
    """Per-cycle slope: central differences inside, one-sided at the ends."""
    hi_fit = np.asarray(hi_fit, dtype=np.float64)
    if len(hi_fit) < 2:
        return np.zeros_like(hi_fit)
    return np.gradient(hi_fit)


def slope_thresholds(pooled_slopes: np.ndarray, n_classes: int = DEFAULT_CLASSES) -> np.ndarray:
    """Quantile cut points at fractions 1/c .. (c-1)/c of the pooled slopes."""
    pooled_slopes = np.asarray(pooled_slopes, dtype=np.float64)
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    if len(pooled_slopes) < n_classes:
        raise ConfigError("fewer pooled slope samples than classes")
    spread = np.ptp(pooled_slopes)
    if spread <= 1e-12 * max(1.0, float(np.abs(pooled_slopes).max())):
        raise SegmentationError("slope distribution is degenerate (all values equal)")
    fractions = np.arange(1, n_classes) / n_classes
    return np.quantile(pooled_slopes, fractions)


def labels_from_slopes(slopes: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Stage index per cycle, monotone non-decreasing along the trajectory.

    Steeper (more negative) slope means a later stage: the raw label counts
    how many thresholds the slope sits below, and a running maximum stops a
    unit from ever moving back to an earlier stage.
    """
    raw = (slopes[:, None] < thresholds[None, :]).sum(axis=1)
    return np.maximum.accumulate(raw).astype(np.int64)


def segment_by_slope(hi_fit: np.ndarray, n_classes: int = DEFAULT_CLASSES, unit_id: int = 0) -> HSLabeling:
    """Segment a single fitted HI curve using its own slope quantiles."""
    slopes = curve_slopes(hi_fit)
    thresholds = slope_thresholds(slopes, n_classes)
    labels = labels_from_slopes(slopes, thresholds)
    counts = np.bincount(labels, minlength=n_classes)
    return HSLabeling(unit_id, labels, thresholds, counts)


def build_health_curves(
    matrices: dict[int, np.ndarray],
    fusion: PCAFusion,
    sg_window: int = DEFAULT_SG_WINDOW,
    sg_order: int = DEFAULT_SG_ORDER,
) -> dict[int, HealthIndexCurve]:
    """Fuse, smooth, and curve-fit every unit's HI series."""
    curves = {}
    for unit, matrix in matrices.items():
        hi_raw = fusion.project(matrix)
        hi_smooth = sg_smooth(hi_raw, sg_window, sg_order)
        if len(hi_smooth) >= 8:
            fit, hi_fit = fit_weibull_curve(hi_smooth)
        else:
            warnings.warn(f"unit {unit}: too short for curve fit; using smoothed HI", stacklevel=2)
            fit, hi_fit = None, hi_smooth.copy()
        curves[unit] = HealthIndexCurve(unit, hi_raw, hi_smooth, hi_fit, fit)
    return curves


@dataclass
class LabelingResult:
    n_classes: int
    thresholds: np.ndarray
    fusion: PCAFusion
    curves: dict[int, HealthIndexCurve]       # train + test units
    labelings: dict[int, HSLabeling]
    train_units: list[int]
    test_units: list[int]

    def labels_by_unit(self) -> dict[int, np.ndarray]:
        return {unit: lab.labels for unit, lab in self.labelings.items()}

    def pooled_class_counts(self, units=None) -> np.ndarray:
        units = self.train_units if units is None else units
        counts = np.zeros(self.n_classes, dtype=np.int64)
        for unit in units:
            counts += np.bincount(self.labelings[unit].labels, minlength=self.n_classes)
        return counts


def construct_labels(
    train: dict[int, np.ndarray],
    test: dict[int, np.ndarray],
    n_classes: int = DEFAULT_CLASSES,
    sg_window: int = DEFAULT_SG_WINDOW,
    sg_order: int = DEFAULT_SG_ORDER,
) -> LabelingResult:
    """Label every unit; all pooled statistics come from the training units.

    The PCA direction and the slope thresholds are fitted on the training
    units only and applied as-is to test units, so no information flows from
    the test split into the label construction.
    """
    fusion = fit_pca_fusion(train.values())
    curves = build_health_curves(train, fusion, sg_window, sg_order)
    curves.update(build_health_curves(test, fusion, sg_window, sg_order))
    pooled = np.concatenate([curve_slopes(curves[u].hi_fit) for u in train])
    thresholds = slope_thresholds(pooled, n_classes)
    labelings = {}
    for unit, curve in curves.items():
        labels = labels_from_slopes(curve_slopes(curve.hi_fit), thresholds)
        labelings[unit] = HSLabeling(
            unit, labels, thresholds, np.bincount(labels, minlength=n_classes)
        )
    result = LabelingResult(
        n_classes=n_classes,
        thresholds=thresholds,
        fusion=fusion,
        curves=curves,
        labelings=labelings,
        train_units=list(train),
        test_units=list(test),
    )
    pooled_counts = result.pooled_class_counts()
    if (pooled_counts == 0).any():
        warnings.warn(
            f"some health stages are empty on the training split: {pooled_counts.tolist()}",
            stacklevel=2,
        )
    return result
