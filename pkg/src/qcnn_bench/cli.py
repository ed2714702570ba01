"""Command-line entry point.

Any config key can be overridden with a flag of the same dotted name, e.g.
``qcnn-bench run --model CNN --training.epochs 5``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import mnist, runner
from .config import SCHEMA, read_config_file, resolve
from .errors import ConfigError, QcnnBenchError
from .plotting import metrics_svg

log = logging.getLogger("qcnn_bench")


def _common(parser):
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", help="64-bit seed for subsampling, shuffling and init")
    parser.add_argument("--output-dir", help="directory for run outputs")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    _common(common)
    parser = argparse.ArgumentParser(prog="qcnn-bench", description="QCNN vs classical baselines on binary MNIST")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", parents=[common], help="download and verify the MNIST files")
    p.add_argument("--mirror", action="append", help="base URL to fetch from (repeatable; file:// works)")
    sub.add_parser("prepare", parents=[common], help="preprocess the configured subset into an .npz")
    sub.add_parser("run", parents=[common], help="train and evaluate one model")
    p = sub.add_parser("sweep", parents=[common], help="repeat a run along batch_size or train_size")
    p.add_argument("--axis", required=True, choices=sorted(runner.SWEEP_AXES))
    p.add_argument("--values", required=True, help="comma-separated values")
    p = sub.add_parser("compare", parents=[common], help="tabulate finished runs")
    p.add_argument("run_ids", nargs="+")
    p = sub.add_parser("plot", parents=[common], help="SVG chart of a run's metric trail")
    p.add_argument("run_id")
    p.add_argument("--out", help="output path (default <run_dir>/curves.svg)")
    return parser


def parse_overrides(extra) -> dict:
    """Turn ``--dotted.key value`` / ``--dotted.key=value`` tokens into settings."""
    settings = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--"):
            raise ConfigError(f"unexpected argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"flag {token} needs a value")
            i += 1
            value = extra[i]
        if key not in SCHEMA:
            raise ConfigError(f"unknown option --{key}")
        settings[key] = value
        i += 1
    return settings


def gather_settings(args, extra) -> dict:
    settings = read_config_file(args.config) if args.config else {}
    if args.seed is not None:
        settings["seed"] = args.seed
    if args.output_dir is not None:
        settings["output_dir"] = args.output_dir
    settings.update(parse_overrides(extra))
    return settings


def _progress(metrics):
    log.info(
        "epoch %d  train_loss %.4f  train_acc %.4f  test_loss %.4f  test_acc %.4f",
        metrics.epoch, metrics.train_loss, metrics.train_accuracy, metrics.test_loss, metrics.test_accuracy,
    )


def _parse_values(text):
    values = [v.strip() for v in text.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    try:
        return [int(v) for v in values]
    except ValueError:
        raise ConfigError(f"--values must be integers, got {text!r}") from None


def dispatch(args, extra) -> int:
    settings = gather_settings(args, extra)
    cmd = args.command
    if cmd == "fetch":
        config = resolve(settings)
        paths = mnist.fetch(config.data_dir, args.mirror or mnist.DEFAULT_MIRRORS)
        for path in paths.values():
            print(path)
        return 0
    if cmd == "prepare":
        print(runner.prepare(resolve(settings)))
        return 0
    if cmd == "run":
        summary = runner.run(resolve(settings), _progress)
        print(json.dumps({k: v for k, v in summary.items() if k not in ("config", "dataset")}, sort_keys=True))
        return 0
    if cmd == "sweep":
        rows, failed = runner.sweep(settings, args.axis, _parse_values(args.values), progress=_progress)
        for row in rows:
            print(",".join(str(c) for c in row))
        return 5 if failed else 0
    if cmd == "compare":
        out = resolve(settings).output_dir
        print(runner.format_table(runner.compare(out, args.run_ids)))
        return 0
    if cmd == "plot":
        out = resolve(settings).output_dir
        rows = runner.read_metrics(out, args.run_id)
        target = Path(args.out) if args.out else Path(out) / args.run_id / "curves.svg"
        runner.write_atomic(target, metrics_svg(rows, args.run_id))
        print(target)
        return 0
    raise ConfigError(f"unknown command {cmd}")


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args, extra)
    except QcnnBenchError as exc:
        print(json.dumps({"error": type(exc).__name__, "exit_code": exc.exit_code, "message": str(exc)}), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
