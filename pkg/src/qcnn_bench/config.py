"""Experiment configuration: flat ``key = value`` files with dotted keys.

Example::

    # QCNN with the ZZ map
    model = QCNN
    seed = 7
    feature_map.kind = ZZ
    training.batch_size = 16

``dataset.seed`` and ``training.seed`` fall back to ``seed``. Training keys
that are not set explicitly take per-model defaults (see ``MODEL_DEFAULTS``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .feature_encoding import FeatureMapKind, parse_feature_map
from .training import GradientMethod, TrainingConfig


class Model(str, enum.Enum):
    QCNN = "QCNN"
    QNN = "QNN"
    CNN = "CNN"
    NN = "NN"

    @property
    def is_quantum(self):
        return self in (Model.QCNN, Model.QNN)


MODEL_DEFAULTS = {
    Model.QCNN: {"training.learning_rate": 0.1, "training.epochs": 20, "training.batch_size": 16},
    Model.QNN: {"training.learning_rate": 0.1, "training.epochs": 20, "training.batch_size": 16},
    Model.CNN: {"training.learning_rate": 0.1, "training.epochs": 10, "training.batch_size": 16},
    Model.NN: {"training.learning_rate": 0.1, "training.epochs": 20, "training.batch_size": 16},
}


def _parse_u64(text):
    value = int(str(text).strip(), 0)
    if not 0 <= value < 2**64:
        raise ValueError("seed must fit in 64 unsigned bits")
    return value


def _parse_digits(text):
    if isinstance(text, (tuple, list)):
        return tuple(int(d) for d in text)
    return tuple(int(d) for d in str(text).replace(" ", "").split(","))


def _parse_model(text):
    return Model(str(text).strip().upper())


def _parse_optional_str(text):
    text = str(text).strip()
    return text or None


SCHEMA = {
    "model": _parse_model,
    "seed": _parse_u64,
    "run_id": _parse_optional_str,
    "output_dir": str,
    "data_dir": str,
    "dataset.train_size": int,
    "dataset.test_size": int,
    "dataset.digits": _parse_digits,
    "dataset.seed": _parse_u64,
    "feature_map.kind": parse_feature_map,
    "feature_map.repetitions": int,
    "training.learning_rate": float,
    "training.epochs": int,
    "training.batch_size": int,
    "training.gradient_method": lambda t: GradientMethod(str(t).strip().upper()),
    "training.fd_epsilon": float,
    "training.seed": _parse_u64,
    "qnn.depth": int,
}


@dataclass
class DatasetConfig:
    train_size: int = 1000
    test_size: int = 500
    digits: tuple = (0, 7)
    seed: int = 42


@dataclass
class ExperimentConfig:
    model: Model = Model.QCNN
    seed: int = 42
    run_id: str | None = None
    output_dir: str = "runs"
    data_dir: str = "data/mnist"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    feature_map: FeatureMapKind = field(default_factory=FeatureMapKind)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    qnn_depth: int = 2

    def to_flat(self) -> dict:
        """Every key with its resolved value, in schema order."""
        t = self.training
        return {
            "model": self.model.value,
            "seed": self.seed,
            "run_id": self.run_id or "",
            "output_dir": self.output_dir,
            "data_dir": self.data_dir,
            "dataset.train_size": self.dataset.train_size,
            "dataset.test_size": self.dataset.test_size,
            "dataset.digits": ",".join(str(d) for d in self.dataset.digits),
            "dataset.seed": self.dataset.seed,
            "feature_map.kind": self.feature_map.kind.value,
            "feature_map.repetitions": self.feature_map.repetitions,
            "training.learning_rate": t.learning_rate,
            "training.epochs": t.epochs,
            "training.batch_size": t.batch_size,
            "training.gradient_method": t.gradient_method.value,
            "training.fd_epsilon": t.fd_epsilon,
            "training.seed": t.seed,
            "qnn.depth": self.qnn_depth,
        }

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_flat().items())


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a dict of raw strings."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def read_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config_text(text, str(path))


def resolve(settings: dict | None = None) -> ExperimentConfig:
    """Build a validated config from explicit settings (raw strings or values)."""
    settings = dict(settings or {})
    parsed = {}
    for key, raw in settings.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            parsed[key] = SCHEMA[key](raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value {raw!r} for {key}: {exc}") from None

    model = parsed.get("model", Model.QCNN)
    seed = parsed.get("seed", 42)
    merged = {**MODEL_DEFAULTS[model], **parsed}

    def get(key, default):
        return merged.get(key, default)

    dataset = DatasetConfig(
        train_size=get("dataset.train_size", 1000),
        test_size=get("dataset.test_size", 500),
        digits=get("dataset.digits", (0, 7)),
        seed=get("dataset.seed", seed),
    )
    if len(dataset.digits) != 2 or dataset.digits[0] == dataset.digits[1]:
        raise ConfigError(f"dataset.digits must name two distinct digits, got {dataset.digits}")
    if not all(0 <= d <= 9 for d in dataset.digits):
        raise ConfigError("dataset.digits must be in 0..9")
    if dataset.train_size < 1 or dataset.test_size < 1:
        raise ConfigError("dataset sizes must be positive")
    training = TrainingConfig(
        learning_rate=get("training.learning_rate", 0.1),
        epochs=get("training.epochs", 20),
        batch_size=get("training.batch_size", 16),
        gradient_method=get("training.gradient_method", GradientMethod.FINITE_DIFFERENCE),
        fd_epsilon=get("training.fd_epsilon", 1e-4),
        seed=get("training.seed", seed),
    )
    if training.batch_size > dataset.train_size:
        raise ConfigError(f"training.batch_size {training.batch_size} exceeds dataset.train_size {dataset.train_size}")
    feature_map = FeatureMapKind(get("feature_map.kind", "Z"), get("feature_map.repetitions", 1))
    depth = get("qnn.depth", 2)
    if depth < 1:
        raise ConfigError("qnn.depth must be >= 1")
    return ExperimentConfig(
        model=model,
        seed=seed,
        run_id=get("run_id", None),
        output_dir=get("output_dir", "runs"),
        data_dir=get("data_dir", "data/mnist"),
        dataset=dataset,
        feature_map=feature_map,
        training=training,
        qnn_depth=depth,
    )
