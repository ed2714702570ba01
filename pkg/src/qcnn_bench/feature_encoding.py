"""Z and ZZ feature maps, following the gate conventions of Qiskit's
ZFeatureMap / ZZFeatureMap (linear entanglement)."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EncodingError
from .quantum_state import CNOT, HADAMARD, StateVector, apply_matrix

RANGE_TOL = 1e-12


class FeatureMap(str, enum.Enum):
    Z = "Z"
    ZZ = "ZZ"


@dataclass(frozen=True)
class FeatureMapKind:
    kind: FeatureMap = FeatureMap.Z
    repetitions: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", parse_feature_map(self.kind))
        if not 1 <= self.repetitions <= 4:
            raise ConfigError(f"feature map repetitions must be in [1, 4], got {self.repetitions}")


def parse_feature_map(value) -> FeatureMap:
    """Accept ``Z``/``ZZ`` as well as the long ``Z_FEATURE_MAP`` spellings."""
    if isinstance(value, FeatureMap):
        return value
    name = str(value).strip().upper().removesuffix("_FEATURE_MAP")
    try:
        return FeatureMap(name)
    except ValueError:
        raise ConfigError(f"unknown feature map {value!r}; expected Z or ZZ") from None


def phase_matrices(angles: np.ndarray) -> np.ndarray:
    """Stack of P(angle) = diag(1, e^{i angle}) for an array of angles."""
    out = np.zeros(np.shape(angles) + (2, 2), dtype=complex)
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = np.exp(1j * np.asarray(angles))
    return out


def validate_features(x: np.ndarray, num_qubits: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if num_qubits is not None and x.shape[-1] != num_qubits:
        raise EncodingError(f"feature length {x.shape[-1]} does not match {num_qubits} qubits")
    if x.shape[-1] < 1:
        raise EncodingError("feature vector is empty")
    if not np.all(np.isfinite(x)):
        raise EncodingError("features contain non-finite values")
    if np.any(x < -RANGE_TOL) or np.any(x > np.pi + RANGE_TOL):
        raise EncodingError("features must be pre-scaled into [0, pi]")
    return x


def encode_batch(x: np.ndarray, kind: FeatureMapKind = FeatureMapKind()) -> np.ndarray:
    """Encode a ``(batch, n)`` feature array into ``(batch, 2**n)`` amplitudes."""
    x = validate_features(x)
    batch, n = x.shape
    if kind.kind is FeatureMap.ZZ and n < 2:
        raise EncodingError("ZZ feature map needs at least 2 qubits")
    states = np.zeros((batch, 2**n), dtype=complex)
    states[:, 0] = 1.0
    single = phase_matrices(2.0 * x)
    pair = phase_matrices(2.0 * (np.pi - x[:, :-1]) * (np.pi - x[:, 1:]))
    for _ in range(kind.repetitions):
        for q in range(n):
            states = apply_matrix(states, HADAMARD, [q], n)
            states = apply_matrix(states, single[:, q], [q], n)
        if kind.kind is FeatureMap.ZZ:
            for q in range(n - 1):
                states = apply_matrix(states, CNOT, [q, q + 1], n)
                states = apply_matrix(states, pair[:, q], [q + 1], n)
                states = apply_matrix(states, CNOT, [q, q + 1], n)
    return states


def encode(features, kind: FeatureMapKind = FeatureMapKind(), num_qubits: int | None = None) -> StateVector:
    x = validate_features(features, num_qubits)
    if x.shape[0] != 1:
        raise EncodingError("encode takes a single feature vector; use encode_batch")
    return StateVector(encode_batch(x, kind)[0])
