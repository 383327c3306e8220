"""Command-line entry point wiring the pipeline stages.

Subcommands mirror the stages: ingest, label, transform, train, evaluate,
experiment, sweep, plus synth for fabricating demo data in the CMAPSS file
format. Flag values override a JSON config file (--config), which overrides
defaults; every run writes the resolved configuration and input hashes to a
manifest in its output directory. Timings go to a separate timings.json so
report files from identical configurations compare byte-for-byte.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, classify, evaluate, figures, kernels, labeling, synth, transform
from .errors import RocketPHMError
from .ingest import (
    DATASET_IDS,
    DEFAULT_SENSORS,
    build_window_arrays,
    ingest_dataset,
    load_cache,
    save_cache,
    sha256_file,
)

FORMAT_VERSION = 1


def _add_config_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with default values for any flag")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rocketphm",
        description="Random convolutional kernel transforms for turbofan health-status classification",
    )
    parser.add_argument(
        "--version", action="version",
        version=f"rocketphm {__version__} (format {FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic CMAPSS-format training files")
    _add_config_flag(p)
    p.add_argument("--datasets", default="FD001", help="comma-separated ids, e.g. FD001,FD004")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--units", type=int, default=None)
    p.add_argument("--min-cycles", type=int, default=None)
    p.add_argument("--max-cycles", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("ingest", help="parse, split, standardize, and window one sub-dataset")
    _add_config_flag(p)
    p.add_argument("--dataset", required=True, choices=DATASET_IDS)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("label", help="construct per-cycle health-status labels from a cache")
    _add_config_flag(p)
    p.add_argument("--cache", required=True)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--sg-window", type=int, default=None)
    p.add_argument("--sg-order", type=int, default=None)
    p.add_argument("--figures", type=int, default=None, help="number of per-unit HI figures")
    p.add_argument("--out", required=True)

    p = sub.add_parser("transform", help="apply a kernel bank to cached windows")
    _add_config_flag(p)
    p.add_argument("--cache", required=True)
    p.add_argument("--labels", default=None, help="labels.csv from the label stage")
    p.add_argument("--bank", default=None, help="existing bank manifest to regenerate from")
    p.add_argument("--variant", choices=("rocket", "minirocket"), default=None)
    p.add_argument("--kernels", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--csv", action="store_true", help="also export features as CSV")
    p.add_argument("--out", required=True, help="output feature file (.npz)")

    p = sub.add_parser("train", help="fit a classifier on the training rows of a feature file")
    _add_config_flag(p)
    p.add_argument("--features", required=True)
    p.add_argument("--model", choices=("ridge", "svm", "lda"), default=None)
    p.add_argument("--svm-c", type=float, default=None)
    p.add_argument("--svm-tol", type=float, default=None)
    p.add_argument("--svm-max-iter", type=int, default=None)
    p.add_argument("--lda-gamma", type=float, default=None)
    p.add_argument("--ridge-cv", choices=("loo", "kfold"), default=None)
    p.add_argument("--out", required=True, help="output model file (.npz)")

    p = sub.add_parser("evaluate", help="score a model on the held-out rows of a feature file")
    _add_config_flag(p)
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--split", choices=("train", "test"), default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("experiment", help="run a full protocol (exp1|exp2|exp3)")
    _add_config_flag(p)
    p.add_argument("--protocol", required=True, choices=evaluate.PROTOCOLS)
    p.add_argument("--datasets", default=None, help="comma-separated ids; protocol default otherwise")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--kernels", type=int, default=None)
    p.add_argument("--classifier", default=None, help="restrict exp3 to one classifier")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="kernel-count sweep of accuracy and wall-clock")
    _add_config_flag(p)
    p.add_argument("--counts", default=None, help="comma-separated ascending kernel counts")
    p.add_argument("--dataset", default=None, choices=DATASET_IDS)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--variant", choices=("rocket", "minirocket"), default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    return parser


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """CLI flags > config file > defaults; returns the resolved dict."""
    config_file = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise RocketPHMError(f"config file not found: {path}")
        config_file = json.loads(path.read_text())
    resolved = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
        elif key in config_file:
            resolved[key] = config_file[key]
        else:
            resolved[key] = default
    return resolved


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _semantic_config(config: dict) -> dict:
    """Resolved config without output locations, so identical computations
    started from different --out directories produce identical manifests."""
    return {k: v for k, v in config.items() if k not in ("out", "out_dir")}


def _write_manifest(out_dir: Path, command: str, config: dict, inputs: dict) -> None:
    _write_json(out_dir / "manifest.json", {
        "format_version": FORMAT_VERSION,
        "version": __version__,
        "command": command,
        "config": _semantic_config(config),
        "inputs": inputs,
    })


def _cmd_synth(args) -> int:
    cfg = _resolve(args, {
        "datasets": "FD001", "out_dir": None, "units": 50,
        "min_cycles": 100, "max_cycles": 200, "seed": 0,
    })
    out_dir = Path(cfg["out_dir"])
    paths = synth.write_demo_corpus(
        out_dir, [d.strip() for d in cfg["datasets"].split(",")],
        n_units=cfg["units"], seed=cfg["seed"],
        min_cycles=cfg["min_cycles"], max_cycles=cfg["max_cycles"],
    )
    _write_manifest(out_dir, "synth", cfg, {})
    for path in paths:
        print(path)
    return 0


def _cmd_ingest(args) -> int:
    cfg = _resolve(args, {
        "dataset": None, "data_dir": None, "window": 30, "stride": 1,
        "test_fraction": 0.2, "seed": 0, "out": None,
    })
    result = ingest_dataset(
        cfg["data_dir"], cfg["dataset"],
        window_length=cfg["window"], stride=cfg["stride"],
        test_fraction=cfg["test_fraction"], seed=cfg["seed"],
    )
    out = Path(cfg["out"])
    save_cache(result, out)
    _write_manifest(out, "ingest", cfg, {"source": result.source_path, "sha256": result.source_sha256})
    print(f"{out}: {len(result.train)} train units, {len(result.test)} test units")
    return 0


def _cmd_label(args) -> int:
    cfg = _resolve(args, {
        "cache": None, "classes": 4, "sg_window": 21, "sg_order": 3,
        "figures": 4, "out": None,
    })
    cache = load_cache(cfg["cache"])
    result = labeling.construct_labels(
        cache.train, cache.test, cfg["classes"], cfg["sg_window"], cfg["sg_order"]
    )
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)

    lines = ["unit_id,cycle,label"]
    for unit, lab in result.labelings.items():
        lines.extend(f"{unit},{cycle + 1},{label}" for cycle, label in enumerate(lab.labels))
    (out / "labels.csv").write_text("\n".join(lines) + "\n")

    summary = {
        "n_classes": cfg["classes"],
        "thresholds": result.thresholds.tolist(),
        "train_units": result.train_units,
        "test_units": result.test_units,
        "pooled_class_counts": result.pooled_class_counts(
            result.train_units + result.test_units
        ).tolist(),
        "units": {
            str(unit): {
                "weibull": None if curve.weibull is None else {
                    "shape": curve.weibull.shape,
                    "scale": curve.weibull.scale,
                    "amplitude": curve.weibull.amplitude,
                    "offset": curve.weibull.offset,
                    "sse": curve.weibull.sse,
                },
                "class_counts": result.labelings[unit].class_counts.tolist(),
            }
            for unit, curve in result.curves.items()
        },
    }
    _write_json(out / "label_summary.json", summary)
    for unit in result.train_units[: cfg["figures"]]:
        figures.health_index_figure(
            result.curves[unit], result.labelings[unit].labels,
            out / "figures" / f"hi_unit_{unit}.png",
        )
    _write_manifest(out, "label", cfg, {"cache": str(cfg["cache"])})
    print(f"{out}: labeled {len(result.labelings)} units, thresholds {result.thresholds.tolist()}")
    return 0


def _read_labels_csv(path: Path) -> dict[int, np.ndarray]:
    if not path.exists():
        raise RocketPHMError(f"no label file at {path}; run the label step first")
    per_unit: dict[int, list[tuple[int, int]]] = {}
    for line in path.read_text().splitlines()[1:]:
        unit, cycle, label = line.split(",")
        per_unit.setdefault(int(unit), []).append((int(cycle), int(label)))
    out = {}
    for unit, rows in per_unit.items():
        rows.sort()
        out[unit] = np.array([label for _, label in rows], dtype=np.int64)
    return out


def _cmd_transform(args) -> int:
    cfg = _resolve(args, {
        "cache": None, "labels": None, "bank": None, "variant": "rocket",
        "kernels": 5000, "seed": 0, "workers": None, "csv": False, "out": None,
    })
    cache = load_cache(cfg["cache"])
    labels_by_unit = _read_labels_csv(Path(cfg["labels"])) if cfg["labels"] else None
    values, labels, units, ends, split = build_window_arrays(cache, labels_by_unit)
    train_windows = values[split == 0]

    if cfg["bank"]:
        manifest = kernels.load_manifest(cfg["bank"])
        bank = kernels.regenerate_bank(manifest, bias_windows=train_windows)
    else:
        m, window = values.shape[1], values.shape[2]
        if cfg["variant"] == "rocket":
            bank = kernels.generate_rocket(cfg["kernels"], m, window, cfg["seed"])
        else:
            bank = kernels.generate_minirocket(cfg["kernels"], m, window, cfg["seed"], train_windows)

    matrix = transform.transform_all(values, bank, workers=cfg["workers"])
    matrix.labels = labels
    matrix.unit_ids = units
    matrix.end_cycles = ends
    matrix.split = split

    out = Path(cfg["out"])
    transform.save_features(matrix, out)
    bank_path = out.with_name(out.stem + "_bank.json")
    kernels.save_bank(bank, bank_path)
    if cfg["csv"]:
        transform.export_features_csv(matrix, out.with_suffix(".csv"))
    _write_manifest(out.parent, "transform", cfg, {
        "cache": str(cfg["cache"]), "bank_ref": bank.manifest_hash(),
    })
    print(f"{out}: {matrix.n_samples} samples x {matrix.n_features} features ({bank.variant})")
    return 0


def _cmd_train(args) -> int:
    cfg = _resolve(args, {
        "features": None, "model": "ridge", "svm_c": classify.DEFAULT_SVM_C,
        "svm_tol": classify.DEFAULT_SVM_TOL, "svm_max_iter": classify.DEFAULT_SVM_MAX_ITER,
        "lda_gamma": None, "ridge_cv": "kfold", "out": None,
    })
    matrix = transform.load_features(cfg["features"])
    if matrix.labels is None:
        raise RocketPHMError("feature file has no labels; rerun transform with --labels")
    train = matrix.split == 0 if matrix.split is not None else np.ones(matrix.n_samples, bool)
    X, y = matrix.values[train], matrix.labels[train]
    if cfg["model"] == "ridge":
        groups = matrix.unit_ids[train] if matrix.unit_ids is not None else None
        model = classify.fit_ridge(X, y, cv=cfg["ridge_cv"], groups=groups)
    elif cfg["model"] == "svm":
        model = classify.fit_svm(
            X, y, C=cfg["svm_c"], tol=cfg["svm_tol"], max_iter=cfg["svm_max_iter"]
        )
    else:
        model = classify.fit_lda(X, y, gamma=cfg["lda_gamma"])
    out = Path(cfg["out"])
    classify.save_model(model, out)
    _write_manifest(out.parent, "train", cfg, {
        "features": str(cfg["features"]), "bank_ref": matrix.bank_ref,
    })
    print(f"{out}: {model.kind} on {X.shape[0]} samples, hyperparams {model.hyperparams.get('alpha', model.hyperparams.get('gamma', model.hyperparams.get('C')))}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _resolve(args, {
        "model": None, "features": None, "split": "test", "classes": 4, "out": None,
    })
    model = classify.load_model(cfg["model"])
    matrix = transform.load_features(cfg["features"])
    if matrix.labels is None:
        raise RocketPHMError("feature file has no labels; rerun transform with --labels")
    if matrix.split is None:
        mask = np.ones(matrix.n_samples, dtype=bool)
    else:
        mask = matrix.split == (0 if cfg["split"] == "train" else 1)
    t0 = time.perf_counter()
    predictions = classify.predict(model, matrix.values[mask])
    t_predict = time.perf_counter() - t0
    report = evaluate.compute_metrics(matrix.labels[mask], predictions, cfg["classes"])
    report.manifest = {"model": str(cfg["model"]), "split": cfg["split"], "n_samples": int(mask.sum())}
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", report.to_dict())
    _write_json(out / "timings.json", {"predict": t_predict})
    figures.confusion_figure(report.confusion, out / "figures" / "confusion.png")
    _write_manifest(out, "evaluate", cfg, {"bank_ref": matrix.bank_ref})
    print(f"accuracy={report.accuracy:.4f} macro_f1={report.macro_f1:.4f} ({mask.sum()} samples)")
    return 0


def _report_rows(reports) -> list[str]:
    header = (
        "protocol,dataset,variant,classifier,kernels,repeat,split_seed,kernel_seed,"
        "n_train,n_test,accuracy,macro_f1"
    )
    rows = [header]
    for r in reports:
        m = r.manifest
        rows.append(
            f"{m.get('protocol', '')},{m['dataset']},{m['variant']},{m['classifier']},"
            f"{m['kernels']},{m.get('repeat', 0)},{m['split_seed']},{m['kernel_seed']},"
            f"{m['n_train']},{m['n_test']},{r.accuracy:.6f},{r.macro_f1:.6f}"
        )
    return rows


def _cmd_experiment(args) -> int:
    cfg = _resolve(args, {
        "protocol": None, "datasets": None, "data_dir": None, "kernels": None,
        "classifier": None, "seed": 0, "repeats": evaluate.DEFAULT_REPEATS,
        "window": 30, "stride": 1, "test_fraction": 0.2, "classes": 4,
        "workers": None, "out": None,
    })
    settings = evaluate.PipelineSettings(
        window_length=cfg["window"], stride=cfg["stride"],
        test_fraction=cfg["test_fraction"], n_classes=cfg["classes"],
        workers=cfg["workers"],
    )
    datasets = [d.strip() for d in cfg["datasets"].split(",")] if cfg["datasets"] else None
    classifiers = (cfg["classifier"],) if cfg["classifier"] else None
    reports = evaluate.run_experiment(
        cfg["protocol"], cfg["data_dir"], datasets=datasets,
        master_seed=cfg["seed"], repeats=cfg["repeats"],
        n_kernels=cfg["kernels"], classifiers=classifiers, settings=settings,
    )
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", {
        "protocol": cfg["protocol"],
        "config": _semantic_config(cfg),
        "runs": [r.to_dict() for r in reports],
    })
    (out / "report.csv").write_text("\n".join(_report_rows(reports)) + "\n")
    _write_json(out / "timings.json", {
        "runs": [
            {"dataset": r.manifest["dataset"], "variant": r.manifest["variant"],
             "classifier": r.manifest["classifier"], "repeat": r.manifest.get("repeat", 0),
             **r.timings}
            for r in reports
        ],
    })
    figures.experiment_figure(reports, out / "figures" / "accuracy.png")
    inputs = {
        ds: sha256_file(Path(cfg["data_dir"]) / f"train_{ds}.txt")
        for ds in sorted({r.manifest["dataset"] for r in reports})
    }
    _write_manifest(out, "experiment", cfg, inputs)
    for r in reports:
        m = r.manifest
        print(
            f"{m['dataset']} {m['variant']}/{m['classifier']} repeat {m.get('repeat', 0)}: "
            f"acc={r.accuracy:.4f} f1={r.macro_f1:.4f}"
        )
    return 0


def _cmd_sweep(args) -> int:
    cfg = _resolve(args, {
        "counts": "100,500,1000,2000,5000,10000", "dataset": "FD001", "data_dir": None,
        "variant": "rocket", "repeats": evaluate.DEFAULT_REPEATS, "seed": 0,
        "workers": None, "out": None,
    })
    counts = [int(c) for c in str(cfg["counts"]).split(",")]
    settings = evaluate.PipelineSettings(workers=cfg["workers"])
    rows = evaluate.kernel_sweep(
        counts, cfg["data_dir"], dataset=cfg["dataset"], repeats=cfg["repeats"],
        master_seed=cfg["seed"], variant=cfg["variant"], settings=settings,
    )
    summary = evaluate.summarize_sweep(rows)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    header = ",".join(rows[0].keys())
    (out / "sweep.csv").write_text(
        "\n".join([header] + [",".join(str(v) for v in r.values()) for r in rows]) + "\n"
    )
    sum_header = ",".join(summary[0].keys())
    (out / "sweep_summary.csv").write_text(
        "\n".join([sum_header] + [",".join(str(v) for v in r.values()) for r in summary]) + "\n"
    )
    figures.sweep_figure(summary, out / "figures" / "sweep.png")
    _write_manifest(out, "sweep", cfg, {
        "source": str(Path(cfg["data_dir"]) / f"train_{cfg['dataset']}.txt"),
        "sha256": sha256_file(Path(cfg["data_dir"]) / f"train_{cfg['dataset']}.txt"),
    })
    for row in summary:
        print(
            f"kernels={row['kernels']}: acc={row['mean_accuracy']:.4f}"
            f"±{row['std_accuracy']:.4f} train={row['mean_train_seconds']:.1f}s"
        )
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "label": _cmd_label,
    "transform": _cmd_transform,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "experiment": _cmd_experiment,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except RocketPHMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
