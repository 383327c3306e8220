import numpy as np

from rocketphm import figures
from rocketphm.evaluate import MetricsReport
from rocketphm.labeling import HealthIndexCurve, WeibullCurveFit


def _curve(n=60):
    t = np.linspace(0, 1, n)
    return HealthIndexCurve(
        unit_id=5,
        hi_raw=-t + 0.05 * np.sin(20 * t),
        hi_smooth=-t,
        hi_fit=-t,
        weibull=WeibullCurveFit(2.0, 100.0, 1.0, 0.0, 0.1),
    )


def test_health_index_figure_written_and_deterministic(tmp_path):
    labels = np.repeat([0, 1, 2], 20)
    a = figures.health_index_figure(_curve(), labels, tmp_path / "a.png")
    b = figures.health_index_figure(_curve(), labels, tmp_path / "b.png")
    assert a.exists() and a.stat().st_size > 1000
    assert a.read_bytes() == b.read_bytes()


def test_sweep_figure(tmp_path):
    summary = [
        {"kernels": 100, "mean_accuracy": 0.7, "std_accuracy": 0.05,
         "mean_train_seconds": 0.5, "std_train_seconds": 0.1},
        {"kernels": 1000, "mean_accuracy": 0.85, "std_accuracy": 0.02,
         "mean_train_seconds": 3.0, "std_train_seconds": 0.3},
    ]
    path = figures.sweep_figure(summary, tmp_path / "sweep.png")
    assert path.exists()


def test_experiment_figure_groups_by_variant_or_classifier(tmp_path):
    def report(dataset, variant, classifier, protocol, acc):
        r = MetricsReport(acc, acc, np.zeros(2), np.zeros(2), np.zeros(2), np.eye(2, dtype=int))
        r.manifest = {"dataset": dataset, "variant": variant,
                      "classifier": classifier, "protocol": protocol}
        return r

    exp2 = [report("FD001", v, "ridge", "exp2", a) for v, a in (("rocket", 0.9), ("minirocket", 0.88))]
    assert figures.experiment_figure(exp2, tmp_path / "exp2.png").exists()
    exp3 = [report("FD004", "rocket", c, "exp3", a) for c, a in (("ridge", 0.8), ("lda", 0.9), ("svm", 0.85))]
    assert figures.experiment_figure(exp3, tmp_path / "exp3.png").exists()


def test_confusion_figure(tmp_path):
    path = figures.confusion_figure(np.array([[10, 2], [1, 12]]), tmp_path / "conf.png")
    assert path.exists()
