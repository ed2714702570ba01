"""Run orchestration: single runs, sweeps and comparison tables.

Layout under ``output_dir``::

    <run_id>/metrics.csv    per-epoch metrics (METRICS_HEADER)
    <run_id>/summary.txt    one-line JSON summary, including the resolved config
    <run_id>/config.txt     resolved config, loadable with --config
    <run_id>/params.npz     trained parameters
    <sweep_id>-sweep.csv    one row per swept value (SWEEP_HEADER)
    comparison.csv          written by compare (COMPARE_HEADER)
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import io
import json
import logging
import os
import tempfile
from pathlib import Path

import numpy as np

from . import classical, mnist
from .ansatz import build_qcnn, build_qnn
from .config import ExperimentConfig, Model, resolve
from .errors import ConfigError, DataError, QcnnBenchError
from .training import train

log = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "train_loss", "train_accuracy", "test_loss", "test_accuracy", "wall_time_ms"]
SWEEP_HEADER = ["axis", "value", "run_id", "final_test_accuracy", "final_test_loss", "wall_time_ms", "status"]
COMPARE_HEADER = ["model", "final_accuracy", "final_loss", "wall_time_ms", "epochs", "run_id"]
SWEEP_AXES = {"batch_size": "training.batch_size", "train_size": "dataset.train_size"}


def write_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


@functools.lru_cache(maxsize=2)
def _raw_mnist(data_dir: str):
    return mnist.load_mnist(data_dir)


def load_dataset(config: ExperimentConfig) -> mnist.Dataset:
    train_raw, test_raw = _raw_mnist(str(Path(config.data_dir).resolve()))
    ds = config.dataset
    dataset = mnist.preprocess(train_raw, test_raw, ds.train_size, ds.test_size, ds.seed, ds.digits)
    dataset.provenance["file_digests"] = mnist.file_digests(config.data_dir)
    return dataset


def build_quantum(config: ExperimentConfig):
    if config.model is Model.QCNN:
        return build_qcnn(mnist.NUM_FEATURES)
    return build_qnn(mnist.NUM_FEATURES, config.qnn_depth)


def _allocate_run_id(config: ExperimentConfig) -> str:
    out = Path(config.output_dir)
    if config.run_id:
        if (out / config.run_id / "summary.txt").exists():
            raise ConfigError(f"run_id {config.run_id!r} already exists in {out}")
        return config.run_id
    base = f"{config.model.value.lower()}-s{config.seed}"
    run_id, k = base, 1
    while (out / run_id).exists():
        k += 1
        run_id = f"{base}-{k}"
    return run_id


def run(config: ExperimentConfig, progress=None) -> dict:
    """Prepare data, train the configured model, and persist metrics and summary."""
    run_id = _allocate_run_id(config)
    config = dataclasses.replace(config, run_id=run_id)
    run_dir = Path(config.output_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(config)

    if config.model.is_quantum:
        arch = build_quantum(config)
        result = train(arch, dataset.quantum_arrays(), config.training, config.feature_map, progress)
        parameter_count = arch.parameter_count
        params = {"theta": result.params}
    else:
        model = classical.build_cnn() if config.model is Model.CNN else classical.build_nn()
        result = classical.train_classical(model, dataset.image_arrays(), config.training, progress)
        parameter_count = model.parameter_count()
        params = result.params

    rows = [
        [m.epoch, repr(m.train_loss), repr(m.train_accuracy), repr(m.test_loss), repr(m.test_accuracy), f"{m.wall_time_ms:.3f}"]
        for m in result.history
    ]
    write_atomic(run_dir / "metrics.csv", _csv_text(METRICS_HEADER, rows))
    write_atomic(run_dir / "config.txt", config.to_text())
    with open(run_dir / "params.npz", "wb") as fh:
        np.savez(fh, **{k.replace(".", "_"): v for k, v in params.items()})

    last = result.history[-1]
    summary = {
        "run_id": run_id,
        "model": config.model.value,
        "final_test_accuracy": last.test_accuracy,
        "final_test_loss": last.test_loss,
        "final_train_accuracy": last.train_accuracy,
        "final_train_loss": last.train_loss,
        "initial_train_loss": result.initial_train.loss,
        "initial_test_accuracy": result.initial_test.accuracy,
        "epochs": last.epoch,
        "total_wall_time_ms": round(last.wall_time_ms, 3),
        "parameter_count": parameter_count,
        "config": config.to_flat(),
        "dataset": dataset.provenance,
    }
    write_atomic(run_dir / "summary.txt", json.dumps(summary, sort_keys=True) + "\n")
    return summary


def read_summary(output_dir, run_id) -> dict:
    path = Path(output_dir) / run_id / "summary.txt"
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"no summary for run {run_id!r} in {output_dir}") from None


def read_metrics(output_dir, run_id) -> list[dict]:
    path = Path(output_dir) / run_id / "metrics.csv"
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != METRICS_HEADER:
                raise DataError(f"{path} has header {reader.fieldnames}, expected {METRICS_HEADER}")
            return [{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()} for row in reader]
    except FileNotFoundError:
        raise DataError(f"no metrics for run {run_id!r} in {output_dir}") from None


def sweep(settings: dict, axis: str, values, sweep_id: str | None = None, progress=None):
    """One run per value along ``axis``; failures are recorded and the sweep continues.

    Returns ``(rows, failed)`` where rows follow ``SWEEP_HEADER``.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {sorted(SWEEP_AXES)}, got {axis!r}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    base = resolve(settings)
    sweep_id = sweep_id or base.run_id or f"{base.model.value.lower()}-{axis}"
    key = SWEEP_AXES[axis]
    rows, failed = [], False
    for value in values:
        run_id = f"{sweep_id}-{axis}-{value}"
        try:
            cfg = resolve({**settings, key: value, "run_id": run_id})
            summary = run(cfg, progress)
            rows.append([axis, value, run_id, summary["final_test_accuracy"], summary["final_test_loss"], summary["total_wall_time_ms"], "ok"])
        except QcnnBenchError as exc:
            log.error("sweep value %s=%s failed: %s", axis, value, exc)
            failed = True
            rows.append([axis, value, run_id, "", "", "", f"error: {exc}"])
    write_atomic(Path(base.output_dir) / f"{sweep_id}-sweep.csv", _csv_text(SWEEP_HEADER, rows))
    return rows, failed


def compare(output_dir, run_ids) -> list[dict]:
    """Comparison rows for the given runs, sorted by final test accuracy (descending)."""
    unique = list(dict.fromkeys(run_ids))
    if len(unique) != len(run_ids):
        log.warning("duplicate run ids ignored: %s", sorted({r for r in run_ids if run_ids.count(r) > 1}))
    missing = [r for r in unique if not (Path(output_dir) / r / "summary.txt").exists()]
    if missing:
        raise DataError(f"missing run ids: {', '.join(missing)}")
    rows = []
    for run_id in unique:
        s = read_summary(output_dir, run_id)
        rows.append(
            {
                "model": s["model"],
                "final_accuracy": s["final_test_accuracy"],
                "final_loss": s["final_test_loss"],
                "wall_time_ms": s["total_wall_time_ms"],
                "epochs": s["epochs"],
                "run_id": run_id,
            }
        )
    rows.sort(key=lambda r: -r["final_accuracy"])
    write_atomic(Path(output_dir) / "comparison.csv", _csv_text(COMPARE_HEADER, [[r[c] for c in COMPARE_HEADER] for r in rows]))
    return rows


def format_table(rows) -> str:
    lines = [f"{'model':<6} {'accuracy':>9} {'loss':>9} {'wall_s':>9} {'epochs':>6}  run_id"]
    for r in rows:
        lines.append(
            f"{r['model']:<6} {r['final_accuracy']:>9.4f} {r['final_loss']:>9.4f} "
            f"{r['wall_time_ms'] / 1000:>9.1f} {r['epochs']:>6}  {r['run_id']}"
        )
    return "\n".join(lines)


def prepare(config: ExperimentConfig) -> Path:
    """Write the preprocessed dataset to ``<output_dir>/dataset-s<seed>.npz`` (plus provenance JSON)."""
    dataset = load_dataset(config)
    q, img = dataset.quantum_arrays(), dataset.image_arrays()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = out / f"dataset-s{config.dataset.seed}"
    with open(f"{stem}.npz", "wb") as fh:
        np.savez_compressed(
            fh,
            train_features=q.train_x,
            train_images=img.train_x,
            train_labels=q.train_y,
            train_source_index=np.array([s.source_index for s in dataset.train]),
            test_features=q.test_x,
            test_images=img.test_x,
            test_labels=q.test_y,
            test_source_index=np.array([s.source_index for s in dataset.test]),
        )
    write_atomic(f"{stem}.json", json.dumps(dataset.provenance, sort_keys=True, indent=2) + "\n")
    return Path(f"{stem}.npz")
