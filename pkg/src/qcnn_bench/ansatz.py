"""Parameterised circuits: the QCNN (convolution, pooling, fully-connected
blocks) and the layered QNN baseline.

Parameter layout
----------------
A conv/fc block owns 15 consecutive parameters, in circuit-time order::

    [b_a(3), b_b(3), t_xx, t_yy, t_zz, a_a(3), a_b(3)]

giving ``U = (A_a (x) A_b) exp(i(t_xx XX + t_yy YY + t_zz ZZ)) (B_a (x) B_b)``
where each single-qubit factor is ``RZ(p0) RY(p1) RZ(p2)``. A pool block owns
3 parameters for the controlled ``RZ RY RZ`` it applies to the kept qubit. A
QNN rotation owns 3 parameters.

Pooling uses deferred measurement: the discarded qubit controls the rotation
and is never touched again, so the readout marginal equals measuring it
mid-circuit and rotating only on outcome 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ArchitectureError, InvalidTargetError
from .feature_encoding import FeatureMapKind, encode_batch
from .quantum_state import CNOT, PAULI_X, PAULI_Y, PAULI_Z, GateMatrix, StateVector, apply_matrix, prob_one

CONV_PARAMS = 15
POOL_PARAMS = 3
ROT_PARAMS = 3

# Parameter-shift recipes as (shift, coefficient) pairs: d f/d theta = sum c * f(theta + s).
_ROTATION_RULE = ((math.pi / 2, 0.5), (-math.pi / 2, -0.5))
_PAULI_PAIR_RULE = ((math.pi / 4, 1.0), (-math.pi / 4, -1.0))
_DP = (math.sqrt(2) + 1) / (4 * math.sqrt(2))
_DM = (math.sqrt(2) - 1) / (4 * math.sqrt(2))
_CONTROLLED_RULE = (
    (math.pi / 2, _DP),
    (-math.pi / 2, -_DP),
    (3 * math.pi / 2, -_DM),
    (-3 * math.pi / 2, _DM),
)

_XX = np.kron(PAULI_X, PAULI_X)
_YY = np.kron(PAULI_Y, PAULI_Y)
_ZZ = np.kron(PAULI_Z, PAULI_Z)


def rz(angle):
    angle = np.asarray(angle, dtype=float)
    out = np.zeros(angle.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(-0.5j * angle)
    out[..., 1, 1] = np.exp(0.5j * angle)
    return out


def ry(angle):
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    out = np.zeros(angle.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def euler_rotation(params):
    """RZ(p0) RY(p1) RZ(p2) for ``params`` of shape ``(..., 3)``."""
    params = np.asarray(params, dtype=float)
    return rz(params[..., 0]) @ ry(params[..., 1]) @ rz(params[..., 2])


def _kron(a, b):
    lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    return np.einsum("...ij,...kl->...ikjl", a, b).reshape(lead + (4, 4))


def _pauli_pair_exp(angle, pair):
    angle = np.asarray(angle, dtype=float)[..., None, None]
    return np.cos(angle) * np.eye(4) + 1j * np.sin(angle) * pair


def conv_matrices(params):
    """Batched 15-parameter two-qubit unitary; ``params`` has shape ``(..., 15)``."""
    params = np.asarray(params, dtype=float)
    if params.shape[-1] != CONV_PARAMS:
        raise ValueError(f"conv block takes {CONV_PARAMS} parameters, got {params.shape[-1]}")
    before = _kron(euler_rotation(params[..., 0:3]), euler_rotation(params[..., 3:6]))
    core = (
        _pauli_pair_exp(params[..., 6], _XX)
        @ _pauli_pair_exp(params[..., 7], _YY)
        @ _pauli_pair_exp(params[..., 8], _ZZ)
    )
    after = _kron(euler_rotation(params[..., 9:12]), euler_rotation(params[..., 12:15]))
    return after @ core @ before


def controlled_matrices(params):
    """Controlled RZ RY RZ with the control on the first target."""
    w = euler_rotation(params)
    out = np.zeros(w.shape[:-2] + (4, 4), dtype=complex)
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 2:, 2:] = w
    return out


def conv_block_matrix(params) -> GateMatrix:
    params = np.asarray(params, dtype=float)
    if params.shape != (CONV_PARAMS,) or not np.all(np.isfinite(params)):
        raise ValueError("conv block needs 15 finite parameters")
    return GateMatrix(conv_matrices(params))


# --- block specs -----------------------------------------------------------


@dataclass(frozen=True)
class ConvBlockSpec:
    pair: tuple[int, int]
    offset: int
    role: str = "conv"
    length = CONV_PARAMS

    def __post_init__(self):
        if self.pair[0] == self.pair[1]:
            raise ArchitectureError(f"conv block on a single qubit {self.pair}")

    @property
    def targets(self):
        return self.pair

    def matrices(self, params):
        return conv_matrices(params)

    def shift_rules(self):
        return (_ROTATION_RULE,) * 6 + (_PAULI_PAIR_RULE,) * 3 + (_ROTATION_RULE,) * 6


@dataclass(frozen=True)
class PoolBlockSpec:
    discarded_qubit: int
    kept_qubit: int
    offset: int
    role = "pool"
    length = POOL_PARAMS

    def __post_init__(self):
        if self.discarded_qubit == self.kept_qubit:
            raise ArchitectureError("pool block must discard a different qubit than it keeps")

    @property
    def targets(self):
        return (self.discarded_qubit, self.kept_qubit)

    def matrices(self, params):
        return controlled_matrices(params)

    def shift_rules(self):
        return (_CONTROLLED_RULE,) * 3


@dataclass(frozen=True)
class RotationSpec:
    qubit: int
    offset: int
    role = "rot"
    length = ROT_PARAMS

    @property
    def targets(self):
        return (self.qubit,)

    def matrices(self, params):
        return euler_rotation(params)

    def shift_rules(self):
        return (_ROTATION_RULE,) * 3


@dataclass(frozen=True)
class CnotSpec:
    control: int
    target: int
    offset: int = 0
    role = "cnot"
    length = 0

    @property
    def targets(self):
        return (self.control, self.target)

    def matrices(self, params):
        return CNOT

    def shift_rules(self):
        return ()


Block = Union[ConvBlockSpec, PoolBlockSpec, RotationSpec, CnotSpec]


@dataclass(frozen=True)
class Layer:
    kind: str
    blocks: tuple


def _check_tiling(blocks, parameter_count):
    spans = sorted((b.offset, b.offset + b.length) for b in blocks if b.length)
    cursor = 0
    for start, stop in spans:
        if start != cursor:
            raise ArchitectureError(f"parameter slices do not tile: gap or overlap at {cursor}")
        cursor = stop
    if cursor != parameter_count:
        raise ArchitectureError(f"parameter slices cover {cursor} of {parameter_count} parameters")


@dataclass(frozen=True)
class QcnnArchitecture:
    num_qubits: int
    layers: tuple
    fc_block: ConvBlockSpec | None
    readout_qubit: int
    parameter_count: int

    def __post_init__(self):
        active = set(range(self.num_qubits))
        for layer in self.layers:
            for block in layer.blocks:
                for q in block.targets:
                    if not 0 <= q < self.num_qubits:
                        raise ArchitectureError(f"block {block} addresses qubit {q} outside the register")
                    if q not in active:
                        raise ArchitectureError(f"block {block} touches retired qubit {q}")
            if layer.kind == "pool":
                for block in layer.blocks:
                    active.discard(block.discarded_qubit)
        if active != {self.readout_qubit}:
            raise ArchitectureError(f"active qubits after the final pool are {sorted(active)}, expected one readout")
        _check_tiling(self.blocks(), self.parameter_count)

    def blocks(self):
        return tuple(b for layer in self.layers for b in layer.blocks)

    def summary(self) -> str:
        lines = [f"QCNN on {self.num_qubits} qubits, {self.parameter_count} parameters, readout qubit {self.readout_qubit}"]
        for i, layer in enumerate(self.layers):
            lines.append(f"  layer {i} [{layer.kind}]")
            for b in layer.blocks:
                if isinstance(b, PoolBlockSpec):
                    desc = f"pool {b.discarded_qubit} -> {b.kept_qubit}"
                else:
                    desc = f"{b.role} ({b.pair[0]}, {b.pair[1]})"
                lines.append(f"    {desc:<22} theta[{b.offset}:{b.offset + b.length}]")
        return "\n".join(lines)


@dataclass(frozen=True)
class QnnArchitecture:
    num_qubits: int
    depth: int
    layers: tuple
    readout_qubit: int
    parameter_count: int

    def __post_init__(self):
        if self.depth < 1:
            raise ArchitectureError("QNN depth must be at least 1")
        _check_tiling(self.blocks(), self.parameter_count)

    def blocks(self):
        return tuple(b for layer in self.layers for b in layer.blocks)

    def summary(self) -> str:
        lines = [f"QNN on {self.num_qubits} qubits, depth {self.depth}, {self.parameter_count} parameters"]
        for i, layer in enumerate(self.layers):
            rots = " ".join(f"q{b.qubit}[{b.offset}:{b.offset + 3}]" for b in layer.blocks if b.role == "rot")
            ring = " ".join(f"{b.control}->{b.target}" for b in layer.blocks if b.role == "cnot")
            lines.append(f"  layer {i}: rot {rots} | cnot {ring}")
        return "\n".join(lines)


Architecture = Union[QcnnArchitecture, QnnArchitecture]

SUPPORTED_QCNN_SIZES = (2, 4, 8, 16)


def build_qcnn(num_qubits: int) -> QcnnArchitecture:
    """Alternate conv and pool layers until one qubit is left.

    With ``m`` active qubits ``a0..a(m-1)`` and ``m > 2`` a stage is: conv on
    ``(a0,a1), (a2,a3), ...`` then ``(a1,a2), ..., (a(m-1),a0)``, then pool
    ``a(2k+1) -> a(2k)``. The last two survivors get the fully-connected block
    and a final pool. For a 2-qubit register that lone block is a conv block
    and no fc block exists.
    """
    if num_qubits not in SUPPORTED_QCNN_SIZES:
        raise ArchitectureError(f"QCNN supports {SUPPORTED_QCNN_SIZES} qubits, got {num_qubits}")
    active = list(range(num_qubits))
    layers = []
    offset = 0
    while len(active) > 2:
        m = len(active)
        conv = []
        for i in range(0, m, 2):
            conv.append(ConvBlockSpec((active[i], active[i + 1]), offset))
            offset += CONV_PARAMS
        for i in range(1, m, 2):
            conv.append(ConvBlockSpec((active[i], active[(i + 1) % m]), offset))
            offset += CONV_PARAMS
        layers.append(Layer("conv", tuple(conv)))
        pool = []
        for i in range(0, m, 2):
            pool.append(PoolBlockSpec(active[i + 1], active[i], offset))
            offset += POOL_PARAMS
        layers.append(Layer("pool", tuple(pool)))
        active = active[::2]

    fc_block = None
    if num_qubits == 2:
        layers.append(Layer("conv", (ConvBlockSpec((0, 1), offset),)))
    else:
        fc_block = ConvBlockSpec((active[0], active[1]), offset, role="fc")
        layers.append(Layer("fc", (fc_block,)))
    offset += CONV_PARAMS
    layers.append(Layer("pool", (PoolBlockSpec(active[1], active[0], offset),)))
    offset += POOL_PARAMS
    return QcnnArchitecture(num_qubits, tuple(layers), fc_block, active[0], offset)


def build_qnn(num_qubits: int, depth: int = 2) -> QnnArchitecture:
    """Hardware-efficient baseline: per layer an RZ RY RZ on every qubit, then a CNOT ring."""
    if num_qubits < 1:
        raise ArchitectureError("QNN needs at least one qubit")
    if depth < 1:
        raise ArchitectureError("QNN depth must be at least 1")
    if num_qubits == 1:
        ring = []
    elif num_qubits == 2:
        ring = [(0, 1)]
    else:
        ring = [(q, (q + 1) % num_qubits) for q in range(num_qubits)]
    layers = []
    offset = 0
    for _ in range(depth):
        blocks = []
        for q in range(num_qubits):
            blocks.append(RotationSpec(q, offset))
            offset += ROT_PARAMS
        blocks.extend(CnotSpec(c, t) for c, t in ring)
        layers.append(Layer("qnn", tuple(blocks)))
    return QnnArchitecture(num_qubits, depth, tuple(layers), 0, offset)


# --- evaluation ------------------------------------------------------------

# rough ceiling on complex amplitudes held at once during batched evaluation
_MAX_AMPLITUDES = 1 << 22


def run_circuit(arch: Architecture, thetas: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Apply ``arch`` under each row of ``thetas`` to each encoded state.

    ``thetas`` is ``(T, P)`` and ``states`` is ``(B, 2**n)``; returns the
    ``(T, B, 2**n)`` output amplitudes.
    """
    n = arch.num_qubits
    thetas = np.atleast_2d(thetas)
    psi = np.broadcast_to(states, (thetas.shape[0],) + states.shape)
    for block in arch.blocks():
        if block.length:
            mats = block.matrices(thetas[:, block.offset : block.offset + block.length])[:, None]
        else:
            mats = block.matrices(None)
        psi = apply_matrix(psi, mats, block.targets, n)
    return psi


def readout_probabilities(arch: Architecture, thetas: np.ndarray, states: np.ndarray) -> np.ndarray:
    """``(T, B)`` probabilities of reading 1 on the readout qubit."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[1] != arch.parameter_count:
        raise ValueError(f"expected {arch.parameter_count} parameters, got {thetas.shape[1]}")
    chunk = max(1, _MAX_AMPLITUDES // max(1, states.size))
    out = np.empty((thetas.shape[0], states.shape[0]))
    for start in range(0, thetas.shape[0], chunk):
        psi = run_circuit(arch, thetas[start : start + chunk], states)
        out[start : start + chunk] = prob_one(psi, arch.readout_qubit, arch.num_qubits)
    return np.clip(out, 0.0, 1.0)


def predict(arch: Architecture, theta, features, kind: FeatureMapKind = FeatureMapKind()) -> np.ndarray:
    """P(label = 1) for every row of ``features``."""
    states = encode_batch(np.atleast_2d(features), kind)
    if states.shape[1] != 2**arch.num_qubits:
        raise ValueError("feature width does not match the architecture's qubit count")
    return readout_probabilities(arch, theta, states)[0]


def forward(arch: Architecture, theta, features, kind: FeatureMapKind = FeatureMapKind()) -> float:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (arch.parameter_count,):
        raise ValueError(f"theta must have length {arch.parameter_count}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta has non-finite entries")
    return float(predict(arch, theta, np.asarray(features, dtype=float)[None, :], kind)[0])


def pool_block_apply(state: StateVector, spec: PoolBlockSpec, params: Sequence[float], retired=()) -> StateVector:
    for q in spec.targets:
        if not 0 <= q < state.num_qubits:
            raise InvalidTargetError(f"qubit {q} out of range")
        if q in retired:
            raise ArchitectureError(f"qubit {q} is already retired")
    mat = controlled_matrices(np.asarray(params, dtype=float))
    return StateVector(apply_matrix(state.amplitudes, mat, spec.targets, state.num_qubits))


def parameter_shift_rules(arch: Architecture):
    """Per-parameter shift recipe, indexed like theta."""
    rules = [None] * arch.parameter_count
    for block in arch.blocks():
        for k, rule in enumerate(block.shift_rules()):
            rules[block.offset + k] = rule
    return rules


def shifted_readouts(arch: Architecture, theta, states: np.ndarray, shifts) -> np.ndarray:
    """Readout probabilities under single-coordinate shifts of ``theta``.

    ``shifts`` is a sequence of ``(parameter_index, delta)``; the result is
    ``(len(shifts), B)``. Each shifted circuit shares the unshifted prefix up
    to the block owning its parameter, and the suffix uses one matrix for
    every row, which is much cheaper than ``readout_probabilities`` on a
    stacked theta matrix.
    """
    theta = np.asarray(theta, dtype=float)
    n = arch.num_qubits
    blocks = arch.blocks()
    owner = np.empty(arch.parameter_count, dtype=np.int64)
    for k, block in enumerate(blocks):
        owner[block.offset : block.offset + block.length] = k
    base = [b.matrices(theta[b.offset : b.offset + b.length]) if b.length else b.matrices(None) for b in blocks]

    groups: dict[int, list[int]] = {}
    for row, (j, _) in enumerate(shifts):
        groups.setdefault(int(owner[j]), []).append(row)

    out = np.empty((len(shifts), states.shape[0]))
    chunk = max(1, _MAX_AMPLITUDES // max(1, states.size))
    psi = states
    for k, block in enumerate(blocks):
        rows = groups.get(k, ())
        for start in range(0, len(rows), chunk):
            part = rows[start : start + chunk]
            local = np.tile(theta[block.offset : block.offset + block.length], (len(part), 1))
            for r, row in enumerate(part):
                j, delta = shifts[row]
                local[r, j - block.offset] += delta
            phi = apply_matrix(
                np.broadcast_to(psi, (len(part),) + psi.shape), block.matrices(local)[:, None], block.targets, n
            )
            for later, mat in zip(blocks[k + 1 :], base[k + 1 :]):
                phi = apply_matrix(phi, mat, later.targets, n)
            out[part] = prob_one(phi, arch.readout_qubit, n)
        psi = apply_matrix(psi, base[k], block.targets, n)
    return np.clip(out, 0.0, 1.0)
