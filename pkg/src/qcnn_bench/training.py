"""MSE loss, gradient estimation and plain gradient descent for the quantum models."""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .ansatz import Architecture, parameter_shift_rules, readout_probabilities, shifted_readouts
from .errors import ConfigError, NumericalError
from .feature_encoding import FeatureMapKind, encode_batch
from .rng import Xoshiro256

log = logging.getLogger(__name__)

DECISION_THRESHOLD = 0.5


class GradientMethod(str, enum.Enum):
    FINITE_DIFFERENCE = "FINITE_DIFFERENCE"
    PARAMETER_SHIFT = "PARAMETER_SHIFT"


@dataclass
class TrainingConfig:
    learning_rate: float = 0.1
    epochs: int = 20
    batch_size: int = 16
    gradient_method: GradientMethod = GradientMethod.FINITE_DIFFERENCE
    fd_epsilon: float = 1e-4
    seed: int = 42

    def __post_init__(self):
        try:
            self.gradient_method = GradientMethod(str(self.gradient_method).upper().split(".")[-1])
        except ValueError:
            raise ConfigError(f"unknown gradient method {self.gradient_method!r}") from None
        # 0 is accepted so that a frozen-parameter run can be expressed
        if not (0.0 <= self.learning_rate <= 10.0) or not math.isfinite(self.learning_rate):
            raise ConfigError(f"learning_rate must be in [0, 10], got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.fd_epsilon > 0:
            raise ConfigError("fd_epsilon must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class LossReport:
    loss: float
    accuracy: float
    n: int


@dataclass(frozen=True)
class RunMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_loss: float
    test_accuracy: float
    wall_time_ms: float


@dataclass
class ArrayDataset:
    """Train/test arrays as consumed by the trainers (features or images)."""

    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray


@dataclass
class TrainResult:
    params: object
    history: list = field(default_factory=list)
    initial_train: LossReport | None = None
    initial_test: LossReport | None = None


def _ordered_mean(values: np.ndarray) -> np.ndarray:
    # summing in sorted order makes the reduction independent of sample order
    return np.sort(values, axis=-1).sum(axis=-1) / values.shape[-1]


def mse_loss(predictions, labels) -> LossReport:
    y_hat = np.asarray(predictions, dtype=float).reshape(-1)
    y = np.asarray(labels, dtype=float).reshape(-1)
    if y_hat.size != y.size:
        raise ValueError(f"{y_hat.size} predictions for {y.size} labels")
    if y.size == 0:
        raise ValueError("empty batch")
    loss = float(_ordered_mean((y - y_hat) ** 2))
    predicted = (y_hat > DECISION_THRESHOLD).astype(float)
    accuracy = float(np.count_nonzero(predicted == y)) / y.size
    return LossReport(loss, accuracy, int(y.size))


def _check_finite(losses, coords):
    bad = ~np.isfinite(losses)
    if np.any(bad):
        raise NumericalError("non-finite loss while probing the gradient", int(coords[np.argmax(bad)]))


def gradient_from_states(arch: Architecture, theta, states, labels, config: TrainingConfig) -> np.ndarray:
    """Gradient of the batch MSE with respect to theta, given encoded states."""
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(labels, dtype=float)
    if y.size == 0:
        raise ValueError("empty batch")
    p = arch.parameter_count
    coords = np.arange(p)
    if config.gradient_method is GradientMethod.FINITE_DIFFERENCE:
        eps = config.fd_epsilon
        shifts = [(j, s) for j in range(p) for s in (eps, -eps)]
        probs = shifted_readouts(arch, theta, states, shifts)
        losses = _ordered_mean((probs - y) ** 2).reshape(p, 2)
        _check_finite(losses[:, 0] + losses[:, 1], coords)
        return (losses[:, 0] - losses[:, 1]) / (2 * eps)

    rules = parameter_shift_rules(arch)
    shifts, owners, coefs = [], [], []
    for j, rule in enumerate(rules):
        for s, c in rule:
            shifts.append((j, s))
            owners.append(j)
            coefs.append(c)
    y_hat = readout_probabilities(arch, theta, states)[0]
    probs = shifted_readouts(arch, theta, states, shifts)
    d_y_hat = np.zeros((p, y.size))
    np.add.at(d_y_hat, np.array(owners), np.array(coefs)[:, None] * probs)
    grad = _ordered_mean(2.0 * (y_hat - y) * d_y_hat)
    _check_finite(grad, coords)
    return grad


def gradient(arch: Architecture, theta, features, labels, config: TrainingConfig, kind=FeatureMapKind()) -> np.ndarray:
    return gradient_from_states(arch, theta, encode_batch(features, kind), labels, config)


def evaluate_states(arch: Architecture, theta, states, labels) -> LossReport:
    return mse_loss(readout_probabilities(arch, theta, states)[0], labels)


def batches(rng: Xoshiro256, n: int, batch_size: int):
    """Shuffled index batches for one epoch; the last partial batch is kept."""
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def check_training_inputs(data: ArrayDataset, config: TrainingConfig):
    n = len(data.train_y)
    if n == 0:
        raise ConfigError("training set is empty")
    if config.batch_size > n:
        raise ConfigError(f"batch_size {config.batch_size} exceeds training set size {n}")


def train(arch: Architecture, data: ArrayDataset, config: TrainingConfig, kind=FeatureMapKind(), progress=None) -> TrainResult:
    """Gradient descent ``theta <- theta - lr * grad`` over seeded mini-batches."""
    check_training_inputs(data, config)
    rng = Xoshiro256(config.seed)
    theta = rng.uniform(-math.pi, math.pi, arch.parameter_count)
    train_states = encode_batch(data.train_x, kind)
    test_states = encode_batch(data.test_x, kind)
    train_y = np.asarray(data.train_y, dtype=float)
    test_y = np.asarray(data.test_y, dtype=float)

    result = TrainResult(theta.copy())
    result.initial_train = evaluate_states(arch, theta, train_states, train_y)
    result.initial_test = evaluate_states(arch, theta, test_states, test_y)
    start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        for idx in batches(rng, len(train_y), config.batch_size):
            g = gradient_from_states(arch, theta, train_states[idx], train_y[idx], config)
            theta = theta - config.learning_rate * g
            if not np.all(np.isfinite(theta)):
                bad = int(np.argmax(~np.isfinite(theta)))
                raise NumericalError(f"theta became non-finite in epoch {epoch}", bad)
        tr = evaluate_states(arch, theta, train_states, train_y)
        te = evaluate_states(arch, theta, test_states, test_y)
        wall = (time.perf_counter() - start) * 1000.0
        metrics = RunMetrics(epoch, tr.loss, tr.accuracy, te.loss, te.accuracy, wall)
        result.history.append(metrics)
        log.info("epoch %d train_loss=%.4f test_acc=%.4f", epoch, tr.loss, te.accuracy)
        if progress is not None:
            progress(metrics)
    result.params = theta
    return result
