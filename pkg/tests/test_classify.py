import numpy as np
import pytest

from rocketphm.errors import ConfigError, FitError
from rocketphm.classify import (
    TrainedClassifier,
    decision_values,
    fit,
    fit_lda,
    fit_ridge,
    fit_svm,
    ledoit_wolf_gamma,
    load_model,
    predict,
    save_model,
)


def blobs(rng, n_per_class=50, n_features=5, separation=6.0, n_classes=2):
    X, y = [], []
    for c in range(n_classes):
        X.append(rng.normal(c * separation, 1.0, (n_per_class, n_features)))
        y.append(np.full(n_per_class, c))
    return np.vstack(X), np.concatenate(y)


class TestRidge:
    def test_separable_blobs_perfect_training(self, rng):
        X, y = blobs(rng)
        model = fit_ridge(X, y)
        assert (predict(model, X) == y).mean() == 1.0

    def test_loo_matches_brute_force(self, rng):
        n, p = 30, 8
        X = rng.normal(size=(n, p))
        y = rng.integers(0, 3, n)
        grid = [0.5, 5.0]
        model = fit_ridge(X, y, grid)
        mean, std = X.mean(0), X.std(0)
        Z = (X - mean) / std
        classes = np.unique(y)
        Y = np.where(y[:, None] == classes[None, :], 1.0, -1.0)
        Yc = Y - Y.mean(0)
        for alpha, reported in zip(grid, model.hyperparams["cv_mse"]):
            errs = []
            for i in range(n):
                keep = np.arange(n) != i
                W = np.linalg.solve(
                    Z[keep].T @ Z[keep] + alpha * np.eye(p), Z[keep].T @ Yc[keep]
                )
                errs.append(((Yc[i] - Z[i] @ W) ** 2).mean())
            assert reported == pytest.approx(np.mean(errs), rel=1e-9)

    def test_loo_matches_brute_force_wide(self, rng):
        n, p = 24, 60
        X = rng.normal(size=(n, p))
        y = rng.integers(0, 2, n)
        grid = [1.0, 10.0]
        model = fit_ridge(X, y, grid)
        mean, std = X.mean(0), X.std(0)
        Z = (X - mean) / std
        classes = np.unique(y)
        Yc = np.where(y[:, None] == classes[None, :], 1.0, -1.0)
        Yc = Yc - Yc.mean(0)
        for alpha, reported in zip(grid, model.hyperparams["cv_mse"]):
            errs = []
            for i in range(n):
                keep = np.arange(n) != i
                A = np.linalg.solve(
                    Z[keep] @ Z[keep].T + alpha * np.eye(n - 1), Yc[keep]
                )
                errs.append(((Yc[i] - Z[i] @ (Z[keep].T @ A)) ** 2).mean())
            assert reported == pytest.approx(np.mean(errs), rel=1e-9)

    def test_kfold_grouped_matches_explicit_refits(self, rng):
        n, p = 60, 10
        X = rng.normal(size=(n, p))
        y = rng.integers(0, 2, n)
        groups = np.repeat(np.arange(10), 6)
        grid = [0.1, 1.0, 10.0]
        model = fit_ridge(X, y, grid, cv="kfold", groups=groups, n_folds=5)
        mean, std = X.mean(0), X.std(0)
        Z = (X - mean) / std
        classes = np.unique(y)
        Yc = np.where(y[:, None] == classes[None, :], 1.0, -1.0)
        Yc = Yc - Yc.mean(0)
        fold_of = {g: i % 5 for i, g in enumerate(np.unique(groups))}
        fold_ids = np.array([fold_of[g] for g in groups])
        for alpha, reported in zip(grid, model.hyperparams["cv_mse"]):
            total = 0.0
            for fold in range(5):
                held = fold_ids == fold
                W = np.linalg.solve(
                    Z[~held].T @ Z[~held] + alpha * np.eye(p), Z[~held].T @ Yc[~held]
                )
                total += ((Yc[held] - Z[held] @ W) ** 2).sum()
            assert reported == pytest.approx(total / Yc.size, rel=1e-9)

    def test_noise_labels_cv_accuracy_near_chance(self, rng):
        X = rng.normal(size=(400, 20))
        y = rng.integers(0, 4, 400)
        accs = []
        folds = np.arange(400) % 5
        for fold in range(5):
            held = folds == fold
            model = fit_ridge(X[~held], y[~held])
            accs.append((predict(model, X[held]) == y[held]).mean())
        assert 0.15 <= np.mean(accs) <= 0.35

    def test_duplicated_feature_columns_keep_predictions(self, rng):
        X, y = blobs(rng, n_per_class=40, n_features=6, separation=2.0, n_classes=3)
        base = predict(fit_ridge(X, y), X)
        doubled = predict(fit_ridge(np.hstack([X, X]), y), np.hstack([X, X]))
        assert (base == doubled).mean() > 0.98

    def test_single_class_rejected(self, rng):
        X = rng.normal(size=(10, 3))
        with pytest.raises(FitError):
            fit_ridge(X, np.zeros(10, dtype=int))

    def test_bad_grid_rejected(self, rng):
        X, y = blobs(rng, n_per_class=5)
        with pytest.raises(ConfigError):
            fit_ridge(X, y, [])
        with pytest.raises(ConfigError):
            fit_ridge(X, y, [-1.0])

    def test_alpha_minimizes_reported_curve(self, rng):
        X, y = blobs(rng, n_per_class=30, separation=1.0)
        model = fit_ridge(X, y)
        curve = model.hyperparams["cv_mse"]
        grid = model.hyperparams["alpha_grid"]
        assert model.hyperparams["alpha"] == grid[int(np.argmin(curve))]


class TestSVM:
    def test_separable_zero_training_errors(self, rng):
        X, y = blobs(rng, separation=8.0)
        model = fit_svm(X, y)
        assert (predict(model, X) == y).mean() == 1.0

    def test_dual_objective_non_increasing(self, rng):
        X, y = blobs(rng, n_per_class=40, separation=0.8, n_classes=3)
        model = fit_svm(X, y, max_iter=50)
        for history in model.hyperparams["dual_objective"]:
            diffs = np.diff(history)
            assert (diffs <= 1e-9).all()

    def test_matches_slow_reference_solver(self, rng):
        # small seeded fixture solved by plain projected gradient on the dual
        n, p = 50, 200
        X = rng.normal(size=(n, p))
        y = np.where(rng.random(n) > 0.5, 1, 0)
        C = 1.0
        model = fit_svm(X, y, C=C, tol=1e-10, max_iter=20000)

        mean, std = X.mean(0), np.where(X.std(0) < 1e-12, 1.0, X.std(0))
        Z = np.column_stack([(X - mean) / std, np.ones(n)])
        target = np.where(y == 1, 1.0, -1.0)
        diag = 1.0 / (2.0 * C)
        Q = (Z * target[:, None]) @ (Z * target[:, None]).T + diag * np.eye(n)
        alpha = np.zeros(n)
        step = 1.0 / np.linalg.eigvalsh(Q).max()
        for _ in range(200000):
            grad = Q @ alpha - 1.0
            new = np.maximum(alpha - step * grad, 0.0)
            if np.abs(new - alpha).max() < 1e-13:
                alpha = new
                break
            alpha = new
        w_ref = Z.T @ (alpha * target)
        scores_ref = Z @ w_ref
        scores_fit = Z @ np.concatenate([model.weights[1], [model.intercepts[1]]])
        np.testing.assert_allclose(scores_fit, scores_ref, atol=1e-3)

    def test_non_convergence_warns_and_flags(self, rng):
        X, y = blobs(rng, n_per_class=50, separation=0.1)
        with pytest.warns(UserWarning, match="SVM"):
            model = fit_svm(X, y, max_iter=1, tol=1e-12)
        assert not model.converged

    def test_deterministic_under_seed(self, rng):
        X, y = blobs(rng, n_per_class=30, separation=1.0)
        a = fit_svm(X, y, seed=3)
        b = fit_svm(X, y, seed=3)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_bad_c_rejected(self, rng):
        X, y = blobs(rng, n_per_class=5)
        with pytest.raises(ConfigError):
            fit_svm(X, y, C=0.0)


class TestLDA:
    def test_gamma_one_is_prior_adjusted_nearest_mean(self, rng):
        X, y = blobs(rng, n_per_class=40, n_features=4, separation=2.5, n_classes=3)
        model = fit_lda(X, y, gamma=1.0)
        Z = (X - model.feature_mean) / model.feature_std
        classes = np.unique(y)
        means = np.vstack([Z[y == c].mean(0) for c in classes])
        cov_scale = np.trace((Z - means[np.searchsorted(classes, y)]).T
                             @ (Z - means[np.searchsorted(classes, y)]) / len(y)) / Z.shape[1]
        priors = np.array([(y == c).mean() for c in classes])
        scores = -0.5 * ((Z[:, None, :] - means[None]) ** 2).sum(-1) / cov_scale + np.log(priors)
        expected = classes[np.argmax(scores, axis=1)]
        np.testing.assert_array_equal(predict(model, X), expected)

    def test_two_gaussians_boundary_at_midpoint(self, rng):
        x0 = rng.normal(0.0, 1.0, 300)
        x1 = rng.normal(4.0, 1.0, 300)
        X = np.concatenate([x0, x1])[:, None]
        y = np.repeat([0, 1], 300)
        model = fit_lda(X, y, gamma=0.0)
        midpoint = (x0.mean() + x1.mean()) / 2.0
        scores = decision_values(model, np.array([[midpoint]]))
        assert scores[0, 0] == pytest.approx(scores[0, 1], abs=1e-9)

    def test_wide_data_matches_dense_solver(self, rng):
        n, p = 60, 500
        X = rng.normal(size=(n, p))
        y = rng.integers(0, 3, n)
        gamma = 0.4
        model = fit_lda(X, y, gamma=gamma)
        Z = (X - model.feature_mean) / model.feature_std
        classes = np.unique(y)
        means = np.vstack([Z[y == c].mean(0) for c in classes])
        centered = Z - means[np.searchsorted(classes, y)]
        cov = centered.T @ centered / n
        shrunk = (1 - gamma) * cov + gamma * (np.trace(cov) / p) * np.eye(p)
        coef = np.linalg.solve(shrunk, means.T).T
        intercept = -0.5 * (coef * means).sum(1) + np.log(
            np.array([(y == c).mean() for c in classes])
        )
        expected = Z @ coef.T + intercept
        np.testing.assert_allclose(decision_values(model, X), expected, atol=1e-6)

    def test_gamma_zero_singular_instructs_shrinkage(self, rng):
        X = rng.normal(size=(20, 50))
        y = rng.integers(0, 2, 20)
        with pytest.raises(FitError, match="shrinkage"):
            fit_lda(X, y, gamma=0.0)

    def test_ledoit_wolf_never_fails_wide(self, rng):
        X = rng.normal(size=(30, 400))
        y = np.array([0, 1] * 15)
        model = fit_lda(X, y)
        assert 0.0 < model.hyperparams["gamma"] <= 1.0
        assert np.isfinite(model.weights).all()

    def test_ledoit_wolf_matches_sklearn(self, rng):
        sklearn = pytest.importorskip("sklearn.covariance")
        X = rng.normal(size=(80, 12)) @ rng.normal(size=(12, 12))
        Xc = X - X.mean(0)
        cov = Xc.T @ Xc / len(Xc)
        expected = sklearn.ledoit_wolf_shrinkage(Xc, assume_centered=True)
        assert ledoit_wolf_gamma(Xc, cov) == pytest.approx(expected, rel=1e-8)

    def test_small_class_rejected(self, rng):
        X = rng.normal(size=(5, 3))
        y = np.array([0, 0, 0, 0, 1])
        with pytest.raises(FitError):
            fit_lda(X, y)

    def test_training_means_classified_correctly(self, rng):
        X, y = blobs(rng, n_per_class=40, n_features=6, separation=4.0, n_classes=3)
        model = fit_lda(X, y)
        classes = np.unique(y)
        means = np.vstack([X[y == c].mean(0) for c in classes])
        np.testing.assert_array_equal(predict(model, means), classes)


class TestPredictInterface:
    def test_empty_batch(self, rng):
        X, y = blobs(rng, n_per_class=10)
        model = fit_ridge(X, y)
        assert len(predict(model, np.empty((0, X.shape[1])))) == 0

    def test_argmax_consistency(self, rng):
        X, y = blobs(rng, n_per_class=30, n_classes=3, separation=1.0)
        model = fit_lda(X, y)
        batch = rng.normal(size=(1000, X.shape[1]))
        scores = decision_values(model, batch)
        np.testing.assert_array_equal(predict(model, batch), model.classes[scores.argmax(1)])

    def test_dimension_mismatch(self, rng):
        X, y = blobs(rng, n_per_class=10)
        model = fit_ridge(X, y)
        with pytest.raises(ConfigError):
            predict(model, np.zeros((2, X.shape[1] + 1)))

    def test_column_scaling_invariance(self, rng):
        X, y = blobs(rng, n_per_class=40, n_features=5, separation=2.0)
        scaled = X.copy()
        scaled[:, 2] *= 37.0
        for fitter in (fit_ridge, fit_svm, fit_lda):
            base = predict(fitter(X, y), X)
            moved = predict(fitter(scaled, y), scaled)
            assert (base == moved).all()

    def test_fit_dispatch(self, rng):
        X, y = blobs(rng, n_per_class=10)
        assert fit("ridge", X, y).kind == "ridge"
        with pytest.raises(ConfigError):
            fit("forest", X, y)


class TestModelIO:
    def test_round_trip(self, tmp_path, rng):
        X, y = blobs(rng, n_per_class=20, n_classes=3)
        model = fit_svm(X, y)
        path = save_model(model, tmp_path / "model.npz")
        loaded = load_model(path)
        assert loaded.kind == "svm"
        assert loaded.converged == model.converged
        np.testing.assert_array_equal(loaded.weights, model.weights)
        np.testing.assert_array_equal(loaded.classes, model.classes)
        np.testing.assert_array_equal(predict(loaded, X), predict(model, X))

    def test_missing_model_names_prior_step(self, tmp_path):
        with pytest.raises(ConfigError, match="train"):
            load_model(tmp_path / "missing.npz")
