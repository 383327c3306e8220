"""Linear classifiers for ~10^4-dimensional kernel features.

All three models share one artifact: per-feature standardization stats fitted
on the training features, a (c, p) weight matrix, and per-class intercepts;
prediction is the row-wise argmax of the decision values with ties broken
toward the lowest class id.

ridge  - one-vs-rest regression on +/-1 targets, regularization chosen by
         exact leave-one-out error via the hat-matrix identity, evaluated on
         the eigendecomposition of whichever Gram matrix (feature-space or
         sample-space) is smaller.
svm    - L2-regularized squared-hinge SVM trained by dual coordinate
         descent, one class at a time, with a seeded visiting order.
lda    - shrinkage discriminant analysis: the pooled within-class covariance
         is blended toward a scaled identity, with the blend weight from a
         Ledoit-Wolf estimate when not given, and discriminants obtained by
         Cholesky solves rather than explicit inversion.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, FitError

DEFAULT_ALPHA_GRID = tuple(np.logspace(-3, 3, 10))
DEFAULT_SVM_C = 1.0
DEFAULT_SVM_TOL = 1e-4
DEFAULT_SVM_MAX_ITER = 1000

_EPS = 1e-12


@dataclass
class TrainedClassifier:
    kind: str
    classes: np.ndarray
    weights: np.ndarray          # (c, p), acts on standardized features
    intercepts: np.ndarray       # (c,)
    feature_mean: np.ndarray
    feature_std: np.ndarray
    hyperparams: dict = field(default_factory=dict)
    converged: bool = True


def _feature_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std < _EPS, 1.0, std)
    return mean, std


def _check_training_inputs(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ConfigError(f"feature matrix must be 2-D, got shape {X.shape}")
    if len(y) != X.shape[0]:
        raise ConfigError(f"{X.shape[0]} samples but {len(y)} labels")
    if X.shape[0] < 2:
        raise FitError("need at least 2 training samples")
    classes = np.unique(y)
    if len(classes) < 2:
        raise FitError(f"training data contains a single class ({classes.tolist()})")
    return X, y, classes


def decision_values(model: TrainedClassifier, X: np.ndarray) -> np.ndarray:
    """Per-class scores, one column per entry of ``model.classes``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.weights.shape[1]:
        raise ConfigError(
            f"feature dimension {X.shape[1] if X.ndim == 2 else X.shape} does not match "
            f"model ({model.weights.shape[1]})"
        )
    Z = (X - model.feature_mean) / model.feature_std
    return Z @ model.weights.T + model.intercepts


def predict(model: TrainedClassifier, X: np.ndarray) -> np.ndarray:
    """Argmax of decision values; ties resolve to the lowest class id."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        return np.empty(0, dtype=model.classes.dtype)
    scores = decision_values(model, X)
    return model.classes[np.argmax(scores, axis=1)]


def _ridge_weights(Z, Yc, alpha):
    """Exact ridge weights for one alpha via a Cholesky solve on the smaller Gram."""
    n, p = Z.shape
    if p <= n:
        gram = Z.T @ Z
        gram.flat[:: p + 1] += alpha
        return cho_solve(cho_factor(gram, lower=True), Z.T @ Yc)
    gram = Z @ Z.T
    gram.flat[:: n + 1] += alpha
    return Z.T @ cho_solve(cho_factor(gram, lower=True), Yc)


def _loo_cv_ridge(Z, Yc, alpha_grid):
    """LOO mean squared error per alpha via the hat-matrix identity."""
    n, p = Z.shape
    if p <= n:
        eigvals, V = np.linalg.eigh(Z.T @ Z)
        eigvals = np.clip(eigvals, 0.0, None)
        B = Z @ V                       # hat diag comes from its squared rows
        C = B.T @ Yc
        B2 = B ** 2
        errors = []
        for alpha in alpha_grid:
            inv = 1.0 / (eigvals + alpha)
            fitted = B @ (C * inv[:, None])
            hat = B2 @ inv
            resid = (Yc - fitted) / np.maximum(1.0 - hat, _EPS)[:, None]
            errors.append(float(np.mean(resid ** 2)))
        best = int(np.argmin(errors))
        inv = 1.0 / (eigvals + alpha_grid[best])
        return V @ (C * inv[:, None]), np.array(errors), best
    eigvals, U = np.linalg.eigh(Z @ Z.T)
    eigvals = np.clip(eigvals, 0.0, None)
    C = U.T @ Yc
    U2 = U ** 2
    errors = []
    for alpha in alpha_grid:
        shrink = eigvals / (eigvals + alpha)
        fitted = U @ (C * shrink[:, None])
        hat = U2 @ shrink
        resid = (Yc - fitted) / np.maximum(1.0 - hat, _EPS)[:, None]
        errors.append(float(np.mean(resid ** 2)))
    best = int(np.argmin(errors))
    A = U @ (C / (eigvals + alpha_grid[best])[:, None])
    return Z.T @ A, np.array(errors), best


def _fold_assignments(y_len: int, groups, n_folds: int) -> np.ndarray:
    """Deterministic fold index per sample; whole groups stay together."""
    if groups is None:
        return np.arange(y_len) % n_folds
    groups = np.asarray(groups)
    if len(groups) != y_len:
        raise ConfigError(f"{y_len} samples but {len(groups)} group ids")
    unique = np.unique(groups)
    if len(unique) < n_folds:
        raise ConfigError(f"need at least {n_folds} groups for {n_folds}-fold CV")
    fold_of_group = {g: i % n_folds for i, g in enumerate(unique)}
    return np.array([fold_of_group[g] for g in groups])


def _kfold_cv_ridge(Z, Yc, alpha_grid, fold_ids, n_folds):
    """Held-out mean squared error per alpha over deterministic folds.

    In the wide-data regime the full sample-space Gram is computed once and
    folds reuse its submatrices, so each (fold, alpha) costs one Cholesky
    solve and held-out predictions come from kernel rows directly.
    """
    n, p = Z.shape
    errors = np.zeros(len(alpha_grid))
    dual = p > n
    gram_full = Z @ Z.T if dual else None
    for fold in range(n_folds):
        held = fold_ids == fold
        kept = ~held
        if dual:
            gram = gram_full[np.ix_(kept, kept)]
            cross = gram_full[np.ix_(held, kept)]
            for i, alpha in enumerate(alpha_grid):
                reg = gram.copy()
                reg.flat[:: reg.shape[0] + 1] += alpha
                coef = cho_solve(cho_factor(reg, lower=True, overwrite_a=True), Yc[kept])
                resid = Yc[held] - cross @ coef
                errors[i] += float((resid ** 2).sum())
        else:
            gram = Z[kept].T @ Z[kept]
            rhs = Z[kept].T @ Yc[kept]
            for i, alpha in enumerate(alpha_grid):
                reg = gram.copy()
                reg.flat[:: p + 1] += alpha
                W = cho_solve(cho_factor(reg, lower=True, overwrite_a=True), rhs)
                resid = Yc[held] - Z[held] @ W
                errors[i] += float((resid ** 2).sum())
    errors /= Yc.size
    best = int(np.argmin(errors))
    return _ridge_weights(Z, Yc, alpha_grid[best]), errors, best


def fit_ridge(X, y, alpha_grid=None, cv: str = "loo", groups=None, n_folds: int = 5) -> TrainedClassifier:
    """One-vs-rest ridge regression with cross-validated regularization.

    cv="loo" (default) scores each alpha by exact leave-one-out error via
    the hat-matrix identity. cv="kfold" holds out deterministic folds
    instead; passing per-sample ``groups`` (e.g. engine unit ids) keeps each
    group in a single fold, which is essential when samples are overlapping
    windows of the same trajectory.
    """
    X, y, classes = _check_training_inputs(X, y)
    grid = np.asarray(DEFAULT_ALPHA_GRID if alpha_grid is None else alpha_grid, dtype=np.float64)
    if len(grid) == 0 or (grid <= 0).any():
        raise ConfigError("alpha grid must be non-empty and strictly positive")
    if cv not in ("loo", "kfold"):
        raise ConfigError(f"cv must be 'loo' or 'kfold', got {cv!r}")
    mean, std = _feature_stats(X)
    Z = (X - mean) / std
    Y = np.where(y[:, None] == classes[None, :], 1.0, -1.0)
    target_mean = Y.mean(axis=0)
    Yc = Y - target_mean
    if cv == "loo":
        W, cv_mse, best = _loo_cv_ridge(Z, Yc, grid)
    else:
        fold_ids = _fold_assignments(len(y), groups, n_folds)
        W, cv_mse, best = _kfold_cv_ridge(Z, Yc, grid, fold_ids, n_folds)
    return TrainedClassifier(
        kind="ridge",
        classes=classes,
        weights=W.T,
        intercepts=target_mean,
        feature_mean=mean,
        feature_std=std,
        hyperparams={
            "alpha": float(grid[best]),
            "alpha_grid": grid.tolist(),
            "cv": cv,
            "cv_mse": cv_mse.tolist(),
        },
    )


@njit(cache=True)
def _svm_dual_cd(Z, target, diag, max_iter, tol, seed):  # pragma: no cover - jitted
    # Dual coordinate descent with active-set shrinking: samples pinned at
    # the zero bound whose gradient exceeds the previous epoch's worst
    # violation drop out until a final full pass confirms convergence.
    n, p = Z.shape
    alpha = np.zeros(n)
    w = np.zeros(p)
    qd = np.empty(n)
    for i in range(n):
        acc = diag
        for j in range(p):
            acc += Z[i, j] * Z[i, j]
        qd[i] = acc
    objective = np.empty(max_iter)
    index = np.arange(n)
    active = n
    shrink_bar = np.inf
    np.random.seed(seed)
    epochs = 0
    converged = False
    for epoch in range(max_iter):
        pg_max = -np.inf
        pg_min = np.inf
        for r in range(active):
            swap = r + np.random.randint(active - r)
            index[r], index[swap] = index[swap], index[r]
        r = 0
        while r < active:
            i = index[r]
            dot = 0.0
            for j in range(p):
                dot += w[j] * Z[i, j]
            grad = target[i] * dot - 1.0 + diag * alpha[i]
            if alpha[i] == 0.0:
                if grad > shrink_bar:
                    active -= 1
                    index[r], index[active] = index[active], index[r]
                    continue
                pg = min(grad, 0.0)
            else:
                pg = grad
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if pg != 0.0:
                updated = alpha[i] - grad / qd[i]
                if updated < 0.0:
                    updated = 0.0
                if updated != alpha[i]:
                    step = (updated - alpha[i]) * target[i]
                    alpha[i] = updated
                    for j in range(p):
                        w[j] += step * Z[i, j]
            r += 1
        wsq = 0.0
        for j in range(p):
            wsq += w[j] * w[j]
        asq = 0.0
        asum = 0.0
        for i in range(n):
            asq += alpha[i] * alpha[i]
            asum += alpha[i]
        objective[epoch] = 0.5 * (wsq + diag * asq) - asum
        epochs = epoch + 1
        if pg_max - pg_min <= tol:
            if active == n:
                converged = True
                break
            active = n
            shrink_bar = np.inf
        else:
            shrink_bar = pg_max if pg_max > 0.0 else np.inf
    return w, objective[:epochs], converged


def fit_svm(
    X, y,
    C: float = DEFAULT_SVM_C,
    tol: float = DEFAULT_SVM_TOL,
    max_iter: int = DEFAULT_SVM_MAX_ITER,
    seed: int = 0,
) -> TrainedClassifier:
    """One-vs-rest L2-regularized squared-hinge SVM via dual coordinate descent.

    Deterministic given the seed: each one-vs-rest subproblem visits samples
    in a seeded random order. The intercept is trained as an extra
    all-ones feature, liblinear style.
    """
    X, y, classes = _check_training_inputs(X, y)
    if C <= 0:
        raise ConfigError(f"C must be positive, got {C}")
    mean, std = _feature_stats(X)
    Z = np.ascontiguousarray(
        np.column_stack([(X - mean) / std, np.ones(X.shape[0])])
    )
    diag = 1.0 / (2.0 * C)
    weights = np.zeros((len(classes), X.shape[1]))
    intercepts = np.zeros(len(classes))
    histories = []
    converged = True
    for idx, cls in enumerate(classes):
        target = np.where(y == cls, 1.0, -1.0)
        w, objective, ok = _svm_dual_cd(
            Z, target, diag, max_iter, tol, (seed + idx) % (2**32)
        )
        weights[idx] = w[:-1]
        intercepts[idx] = w[-1]
        histories.append(objective.tolist())
        converged &= bool(ok)
    if not converged:
        warnings.warn(f"SVM did not reach tol={tol} within {max_iter} epochs", stacklevel=2)
    return TrainedClassifier(
        kind="svm",
        classes=classes,
        weights=weights,
        intercepts=intercepts,
        feature_mean=mean,
        feature_std=std,
        hyperparams={
            "C": C, "tol": tol, "max_iter": max_iter, "seed": seed,
            "dual_objective": histories,
        },
        converged=converged,
    )


def ledoit_wolf_gamma(centered: np.ndarray, cov: np.ndarray) -> float:
    """Analytic shrinkage intensity toward (tr(S)/p) * I.

    ``centered`` holds within-class centered rows; ``cov`` is their biased
    covariance (X'X / n).
    """
    n, p = centered.shape
    mu = np.trace(cov) / p
    frob = float((cov * cov).sum())
    d2 = frob / p - mu ** 2
    if d2 <= 0:
        return 1.0
    sqnorms = (centered ** 2).sum(axis=1)
    b2 = (float((sqnorms ** 2).sum()) - n * frob) / (n ** 2 * p)
    return float(np.clip(min(b2, d2) / d2, 0.0, 1.0))


def fit_lda(X, y, gamma: float | None = None) -> TrainedClassifier:
    """Shrinkage linear discriminant analysis.

    gamma=0 requests the plain pooled covariance and fails on singular
    problems (always the case when features outnumber samples); gamma=None
    picks the Ledoit-Wolf estimate.
    """
    X, y, classes = _check_training_inputs(X, y)
    if gamma is not None and not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"shrinkage gamma must be in [0, 1], got {gamma}")
    mean, std = _feature_stats(X)
    Z = (X - mean) / std
    n, p = Z.shape
    counts = np.array([(y == cls).sum() for cls in classes])
    if (counts < 2).any():
        raise FitError("every class needs at least 2 samples for LDA")
    priors = counts / n
    means = np.vstack([Z[y == cls].mean(axis=0) for cls in classes])
    centered = Z - means[np.searchsorted(classes, y)]
    cov = (centered.T @ centered) / n
    resolved = ledoit_wolf_gamma(centered, cov) if gamma is None else float(gamma)
    mu = np.trace(cov) / p
    shrunk = (1.0 - resolved) * cov
    shrunk.flat[:: p + 1] += resolved * mu
    try:
        chol = cho_factor(shrunk, lower=True)
    except np.linalg.LinAlgError:
        raise FitError(
            "within-class covariance is singular; use shrinkage (gamma > 0 or gamma=None)"
        ) from None
    coefs = cho_solve(chol, means.T).T          # (c, p)
    intercepts = -0.5 * (coefs * means).sum(axis=1) + np.log(priors)
    return TrainedClassifier(
        kind="lda",
        classes=classes,
        weights=coefs,
        intercepts=intercepts,
        feature_mean=mean,
        feature_std=std,
        hyperparams={
            "gamma": resolved,
            "gamma_source": "ledoit_wolf" if gamma is None else "fixed",
        },
    )


_FITTERS = {"ridge": fit_ridge, "svm": fit_svm, "lda": fit_lda}


def fit(kind: str, X, y, **kwargs) -> TrainedClassifier:
    """Uniform entry point used by the CLI and the experiment protocols."""
    if kind not in _FITTERS:
        raise ConfigError(f"unknown classifier kind {kind!r}; expected one of {sorted(_FITTERS)}")
    return _FITTERS[kind](X, y, **kwargs)


def save_model(model: TrainedClassifier, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        path,
        kind=np.frombuffer(model.kind.encode(), dtype=np.uint8),
        classes=model.classes,
        weights=model.weights,
        intercepts=model.intercepts,
        feature_mean=model.feature_mean,
        feature_std=model.feature_std,
        hyperparams=np.frombuffer(
            json.dumps(model.hyperparams, sort_keys=True).encode(), dtype=np.uint8
        ),
        converged=np.array([model.converged]),
    )
    return path


def load_model(path: str | Path) -> TrainedClassifier:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no model file at {path}; run the train step first")
    with np.load(path) as data:
        return TrainedClassifier(
            kind=bytes(data["kind"]).decode(),
            classes=data["classes"],
            weights=data["weights"],
            intercepts=data["intercepts"],
            feature_mean=data["feature_mean"],
            feature_std=data["feature_std"],
            hyperparams=json.loads(bytes(data["hyperparams"]).decode()),
            converged=bool(data["converged"][0]),
        )
