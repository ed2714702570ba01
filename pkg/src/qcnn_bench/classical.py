"""Fully-connected and convolutional baselines in plain numpy.

Images are channels-first ``(batch, channels, height, width)``. Every layer
caches what it needs in ``forward`` and returns the input gradient from
``backward``, leaving parameter gradients in ``grads``.
"""

from __future__ import annotations

import math
import time

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, NumericalError
from .rng import Xoshiro256
from .training import ArrayDataset, RunMetrics, TrainingConfig, TrainResult, batches, check_training_inputs, mse_loss

RELU, SIGMOID, NONE = "RELU", "SIGMOID", "NONE"


def _activate(z, activation):
    if activation == RELU:
        return np.maximum(z, 0.0)
    if activation == SIGMOID:
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def _activation_grad(z, a, activation):
    if activation == RELU:
        return (z > 0).astype(z.dtype)
    if activation == SIGMOID:
        return a * (1.0 - a)
    return np.ones_like(z)


def _init_limit(fan_in, fan_out, activation):
    # He-uniform for RELU, Xavier-uniform otherwise
    if activation == RELU:
        return math.sqrt(6.0 / fan_in)
    return math.sqrt(6.0 / (fan_in + fan_out))


class Dense:
    def __init__(self, in_dim, out_dim, activation=NONE):
        self.in_dim, self.out_dim, self.activation = in_dim, out_dim, activation
        self.params = {"weights": np.zeros((out_dim, in_dim)), "biases": np.zeros(out_dim)}
        self.grads = {}

    def initialize(self, rng: Xoshiro256):
        limit = _init_limit(self.in_dim, self.out_dim, self.activation)
        w = rng.uniform(-limit, limit, self.in_dim * self.out_dim)
        self.params["weights"] = w.reshape(self.out_dim, self.in_dim)
        self.params["biases"] = np.zeros(self.out_dim)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"dense layer expects (batch, {self.in_dim}), got {x.shape}")
        self._x = x
        self._z = x @ self.params["weights"].T + self.params["biases"]
        self._a = _activate(self._z, self.activation)
        return self._a

    def backward(self, grad_out):
        gz = grad_out * _activation_grad(self._z, self._a, self.activation)
        self.grads = {"weights": gz.T @ self._x, "biases": gz.sum(axis=0)}
        return gz @ self.params["weights"]


class Conv2D:
    """3x3 kernels, stride 1, no padding."""

    kernel = 3

    def __init__(self, in_channels, filters, activation=RELU):
        if filters < 1:
            raise ConfigError("conv layer needs at least one filter")
        self.in_channels, self.filters, self.activation = in_channels, filters, activation
        k = self.kernel
        self.params = {"weights": np.zeros((filters, in_channels, k, k)), "biases": np.zeros(filters)}
        self.grads = {}

    def initialize(self, rng: Xoshiro256):
        k = self.kernel
        fan_in, fan_out = self.in_channels * k * k, self.filters * k * k
        limit = _init_limit(fan_in, fan_out, self.activation)
        w = rng.uniform(-limit, limit, self.filters * fan_in)
        self.params["weights"] = w.reshape(self.filters, self.in_channels, k, k)
        self.params["biases"] = np.zeros(self.filters)

    def forward(self, x):
        k = self.kernel
        if x.ndim != 4 or x.shape[1] != self.in_channels or x.shape[2] < k or x.shape[3] < k:
            raise ValueError(f"conv layer expects (batch, {self.in_channels}, >={k}, >={k}), got {x.shape}")
        self._windows = sliding_window_view(x, (k, k), axis=(2, 3))
        self._z = np.einsum("bchwij,fcij->bfhw", self._windows, self.params["weights"], optimize=True)
        self._z += self.params["biases"][None, :, None, None]
        self._a = _activate(self._z, self.activation)
        return self._a

    def backward(self, grad_out):
        k = self.kernel
        gz = grad_out * _activation_grad(self._z, self._a, self.activation)
        self.grads = {
            "weights": np.einsum("bfhw,bchwij->fcij", gz, self._windows, optimize=True),
            "biases": gz.sum(axis=(0, 2, 3)),
        }
        padded = np.pad(gz, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
        windows = sliding_window_view(padded, (k, k), axis=(2, 3))
        flipped = self.params["weights"][:, :, ::-1, ::-1]
        return np.einsum("bfhwij,fcij->bchw", windows, flipped, optimize=True)


class MaxPool2D:
    """2x2 window, stride 2. Ties route the gradient to the first maximum."""

    def __init__(self):
        self.params, self.grads = {}, {}

    def initialize(self, rng):
        pass

    def forward(self, x):
        b, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"max-pool input must have even height and width, got {h}x{w}")
        blocks = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
        arg = blocks.argmax(axis=-1)
        self._mask = np.eye(4, dtype=x.dtype)[arg]
        self._shape = x.shape
        return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(self, grad_out):
        b, c, h, w = self._shape
        g = self._mask * grad_out[..., None]
        return g.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)


class Flatten:
    def __init__(self):
        self.params, self.grads = {}, {}

    def initialize(self, rng):
        pass

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)


class Sequential:
    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)

    def initialize(self, rng: Xoshiro256):
        for layer in self.layers:
            layer.initialize(rng)
        return self

    def _check(self, x):
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"model expects inputs of shape {self.input_shape}, got {x.shape[1:]}")

    def forward(self, x):
        """Return predictions of shape ``(batch,)``."""
        x = np.asarray(x, dtype=float)
        self._check(x)
        for layer in self.layers:
            x = layer.forward(x)
        return x.reshape(x.shape[0])

    def backward(self, grad_pred):
        g = np.asarray(grad_pred, dtype=float).reshape(-1, 1)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def loss_and_grads(self, x, y):
        """MSE loss of the batch; parameter gradients are left on the layers."""
        y_hat = self.forward(x)
        y = np.asarray(y, dtype=float)
        self.backward(2.0 * (y_hat - y) / y.size)
        return float(np.mean((y_hat - y) ** 2))

    def parameters(self):
        for i, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield f"{i}.{name}", layer, name

    def parameter_count(self):
        return sum(layer.params[name].size for _, layer, name in self.parameters())

    def get_params(self):
        return {key: layer.params[name].copy() for key, layer, name in self.parameters()}

    def sgd_step(self, learning_rate):
        for _, layer, name in self.parameters():
            layer.params[name] = layer.params[name] - learning_rate * layer.grads[name]


def build_nn(input_dim=784, hidden=128):
    return Sequential([Dense(input_dim, hidden, RELU), Dense(hidden, 1, SIGMOID)], (input_dim,))


def build_cnn(image_size=28, filters=8, hidden=64):
    pooled = (image_size - 2) // 2
    return Sequential(
        [
            Conv2D(1, filters, RELU),
            MaxPool2D(),
            Flatten(),
            Dense(filters * pooled * pooled, hidden, RELU),
            Dense(hidden, 1, SIGMOID),
        ],
        (1, image_size, image_size),
    )


def model_inputs(model: Sequential, images: np.ndarray) -> np.ndarray:
    """Reshape ``(N, 28, 28)`` images to whatever the model consumes."""
    images = np.asarray(images, dtype=float)
    return images.reshape((images.shape[0],) + model.input_shape)


def predict(model: Sequential, x, chunk=500):
    return np.concatenate([model.forward(x[i : i + chunk]) for i in range(0, len(x), chunk)])


def train_classical(model: Sequential, data: ArrayDataset, config: TrainingConfig, progress=None) -> TrainResult:
    """Seeded init then mini-batch SGD on the MSE, same loop as the quantum trainer."""
    check_training_inputs(data, config)
    rng = Xoshiro256(config.seed)
    model.initialize(rng)
    train_x, test_x = model_inputs(model, data.train_x), model_inputs(model, data.test_x)
    train_y, test_y = np.asarray(data.train_y, dtype=float), np.asarray(data.test_y, dtype=float)

    result = TrainResult(None)
    result.initial_train = mse_loss(predict(model, train_x), train_y)
    result.initial_test = mse_loss(predict(model, test_x), test_y)
    start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        for idx in batches(rng, len(train_y), config.batch_size):
            loss = model.loss_and_grads(train_x[idx], train_y[idx])
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss in epoch {epoch}")
            model.sgd_step(config.learning_rate)
        tr = mse_loss(predict(model, train_x), train_y)
        te = mse_loss(predict(model, test_x), test_y)
        metrics = RunMetrics(epoch, tr.loss, tr.accuracy, te.loss, te.accuracy, (time.perf_counter() - start) * 1000.0)
        result.history.append(metrics)
        if progress is not None:
            progress(metrics)
    result.params = model.get_params()
    return result
