import numpy as np
import pytest

from rocketphm.errors import ConfigError
from rocketphm.evaluate import (
    PipelineSettings,
    compute_metrics,
    derive_seeds,
    kernel_sweep,
    prepare,
    run_experiment,
    run_single,
    summarize_sweep,
)
from rocketphm.synth import write_train_file

FAST = PipelineSettings(window_length=12, sg_window=9, n_classes=3)


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("data")
    write_train_file(data_dir, "FD001", n_units=8, seed=5, min_cycles=45, max_cycles=70)
    return data_dir


class TestComputeMetrics:
    def test_perfect_predictions(self):
        report = compute_metrics([0, 1, 2, 3], [0, 1, 2, 3], 4)
        assert report.accuracy == 1.0
        assert report.macro_f1 == 1.0
        np.testing.assert_array_equal(report.confusion, np.eye(4, dtype=int))

    def test_hand_computed_half_case(self):
        report = compute_metrics([0, 0, 1, 1], [0, 1, 0, 1], 2)
        assert report.accuracy == 0.5
        np.testing.assert_allclose(report.f1, [0.5, 0.5])
        assert report.macro_f1 == 0.5

    def test_degenerate_all_one_class(self):
        truth = [0, 1, 2, 3] * 5
        pred = [0] * 20
        report = compute_metrics(truth, pred, 4)
        assert report.accuracy == 0.25
        assert report.macro_f1 == pytest.approx(0.1)

    def test_absent_class_counts_as_zero(self):
        report = compute_metrics([0, 0, 1], [0, 0, 1], 3)
        assert report.f1[2] == 0.0
        assert report.macro_f1 == pytest.approx(2.0 / 3.0)

    def test_confusion_identities(self, rng):
        truth = rng.integers(0, 5, 500)
        pred = rng.integers(0, 5, 500)
        report = compute_metrics(truth, pred, 5)
        assert report.confusion.sum() == 500
        np.testing.assert_array_equal(
            report.confusion.sum(axis=1), np.bincount(truth, minlength=5)
        )
        assert report.accuracy == pytest.approx(np.trace(report.confusion) / 500)

    def test_brute_force_counting_oracle(self, rng):
        for _ in range(25):
            n_classes = int(rng.integers(2, 6))
            truth = rng.integers(0, n_classes, 40)
            pred = rng.integers(0, n_classes, 40)
            report = compute_metrics(truth, pred, n_classes)
            assert report.accuracy == sum(t == p for t, p in zip(truth, pred)) / 40
            f1s = []
            for c in range(n_classes):
                tp = sum(1 for t, p in zip(truth, pred) if t == c and p == c)
                fp = sum(1 for t, p in zip(truth, pred) if t != c and p == c)
                fn = sum(1 for t, p in zip(truth, pred) if t == c and p != c)
                precision = tp / (tp + fp) if tp + fp else 0.0
                recall = tp / (tp + fn) if tp + fn else 0.0
                f1s.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
            assert report.macro_f1 == pytest.approx(np.mean(f1s))

    def test_length_mismatch(self):
        with pytest.raises(ConfigError):
            compute_metrics([0, 1], [0], 2)

    def test_out_of_range_labels(self):
        with pytest.raises(ConfigError):
            compute_metrics([0, 5], [0, 1], 2)


class TestSeeds:
    def test_derived_seeds_deterministic_and_distinct(self):
        a = derive_seeds(99, 5)
        b = derive_seeds(99, 5)
        assert a == b
        assert len({s for pair in a for s in pair}) == 10
        assert derive_seeds(100, 5) != a


class TestProtocols:
    def test_prepare_shapes(self, small_data):
        prep = prepare(small_data, "FD001", split_seed=1, settings=FAST)
        assert prep.values.shape[1] == 14
        assert prep.values.shape[2] == FAST.window_length
        assert prep.labels.min() >= 0 and prep.labels.max() < FAST.n_classes
        assert set(np.unique(prep.split)) <= {0, 1}
        train_units = set(prep.unit_ids[prep.train_mask].tolist())
        test_units = set(prep.unit_ids[prep.test_mask].tolist())
        assert not train_units & test_units

    def test_run_single_report_contents(self, small_data):
        prep = prepare(small_data, "FD001", split_seed=1, settings=FAST)
        report = run_single(prep, "rocket", 60, "ridge", kernel_seed=4, settings=FAST)
        assert 0.0 <= report.accuracy <= 1.0
        assert {"transform", "fit", "predict"} <= set(report.timings)
        assert report.manifest["kernels"] == 60
        assert report.manifest["n_features"] == 120

    def test_exp1_runs_both_variants(self, small_data):
        reports = run_experiment(
            "exp1", small_data, datasets=["FD001"], master_seed=3,
            repeats=1, n_kernels=90, settings=FAST,
        )
        variants = {r.manifest["variant"] for r in reports}
        assert variants == {"rocket", "minirocket"}
        assert all(r.manifest["classifier"] == "ridge" for r in reports)

    def test_exp3_compares_classifiers_on_ppv(self, small_data):
        reports = run_experiment(
            "exp3", small_data, datasets=["FD001"], master_seed=3,
            repeats=1, n_kernels=90, settings=FAST,
        )
        assert {r.manifest["classifier"] for r in reports} == {"ridge", "svm", "lda"}
        assert all(r.manifest["ppv_only"] for r in reports)
        widths = {r.manifest["n_features"] for r in reports}
        assert widths == {90}  # PPV columns only

    def test_experiment_deterministic_given_master_seed(self, small_data):
        kwargs = dict(
            datasets=["FD001"], master_seed=11, repeats=1, n_kernels=90, settings=FAST
        )
        a = run_experiment("exp1", small_data, **kwargs)
        b = run_experiment("exp1", small_data, **kwargs)
        assert [r.accuracy for r in a] == [r.accuracy for r in b]
        assert [r.to_dict() for r in a] == [r.to_dict() for r in b]

    def test_unknown_protocol(self, small_data):
        with pytest.raises(ConfigError):
            run_experiment("exp9", small_data)

    def test_missing_data_dir_mentions_path(self, tmp_path):
        with pytest.raises(ConfigError, match="train_FD001.txt"):
            run_experiment("exp1", tmp_path / "nowhere", datasets=["FD001"], repeats=1)


class TestSweep:
    def test_single_point_single_repeat(self, small_data):
        rows = kernel_sweep([50], small_data, dataset="FD001", repeats=1,
                            master_seed=0, settings=FAST)
        assert len(rows) == 1
        assert rows[0]["kernels"] == 50
        assert rows[0]["train_seconds"] > 0

    def test_summary_aggregates(self, small_data):
        rows = kernel_sweep([30, 60], small_data, dataset="FD001", repeats=2,
                            master_seed=1, settings=FAST)
        summary = summarize_sweep(rows)
        assert [s["kernels"] for s in summary] == [30, 60]
        assert all(s["repeats"] == 2 for s in summary)

    def test_counts_must_ascend(self, small_data):
        with pytest.raises(ConfigError):
            kernel_sweep([100, 50], small_data)
        with pytest.raises(ConfigError):
            kernel_sweep([], small_data)
