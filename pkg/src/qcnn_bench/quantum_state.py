"""Dense statevector simulation.

Qubit 0 is the least-significant bit of the amplitude index. A two-qubit gate
applied on ``targets=(a, b)`` sees local basis index ``2*bit(a) + bit(b)``, so
``np.kron(A, B)`` acts with ``A`` on qubit ``a`` and ``B`` on qubit ``b``.

The array-level helpers (``apply_matrix``, ``prob_one``) accept any number of
leading batch axes; the model code uses them to push many samples and many
parameter settings through a circuit at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ImpossibleOutcomeError, InvalidGateError, InvalidTargetError

MAX_QUBITS = 24
UNITARY_TOL = 1e-10

_SQ2 = 1.0 / np.sqrt(2.0)
HADAMARD = np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


class GateMatrix:
    """A unitary on one or two qubits, checked at construction."""

    def __init__(self, matrix):
        m = np.array(matrix, dtype=complex)
        if m.shape not in ((2, 2), (4, 4)):
            raise InvalidGateError(f"gate must be 2x2 or 4x4, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidGateError("gate has non-finite entries")
        err = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
        if err >= UNITARY_TOL:
            raise InvalidGateError(f"gate is not unitary (max |U^dag U - I| = {err:.3e})")
        m.setflags(write=False)
        self.matrix = m

    @property
    def arity(self) -> int:
        return 1 if self.matrix.shape[0] == 2 else 2

    def dagger(self) -> "GateMatrix":
        return GateMatrix(self.matrix.conj().T)

    def __repr__(self):
        return f"GateMatrix(arity={self.arity})"


@dataclass(frozen=True)
class MeasurementOutcome:
    qubit: int
    probability_zero: float
    probability_one: float


class StateVector:
    def __init__(self, amplitudes, num_qubits: int | None = None):
        amps = np.array(amplitudes, dtype=complex).reshape(-1)
        n = int(round(np.log2(amps.size))) if amps.size else 0
        if num_qubits is None:
            num_qubits = n
        _check_qubit_count(num_qubits)
        if amps.size != 2**num_qubits:
            raise ConfigError(f"expected {2**num_qubits} amplitudes, got {amps.size}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-10:
            raise ConfigError(f"state is not normalised (norm {norm!r})")
        self.num_qubits = num_qubits
        self.amplitudes = amps

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.num_qubits)

    def __repr__(self):
        return f"StateVector(num_qubits={self.num_qubits})"


def _check_qubit_count(num_qubits):
    if not isinstance(num_qubits, (int, np.integer)) or not 1 <= num_qubits <= MAX_QUBITS:
        raise ConfigError(f"num_qubits must be in [1, {MAX_QUBITS}], got {num_qubits!r}")


def _check_index(qubit, num_qubits):
    if not 0 <= qubit < num_qubits:
        raise InvalidTargetError(f"qubit {qubit} out of range for {num_qubits} qubits")


def new_zero_state(num_qubits: int) -> StateVector:
    _check_qubit_count(num_qubits)
    amps = np.zeros(2**num_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(amps, num_qubits)


def apply_matrix(states: np.ndarray, matrix: np.ndarray, targets, num_qubits: int) -> np.ndarray:
    """Apply a 2x2 or 4x4 matrix to ``targets`` of a batch of statevectors.

    ``states`` has shape ``lead + (2**num_qubits,)``; ``matrix`` is ``(d, d)``
    or ``lead' + (d, d)`` with ``lead'`` broadcastable against ``lead``.
    """
    lead = states.shape[:-1]
    nl = len(lead)
    k = len(targets)
    psi = states.reshape(lead + (2,) * num_qubits)
    axes = [nl + num_qubits - 1 - t for t in targets]
    psi = np.moveaxis(psi, axes, list(range(-k, 0)))
    moved_shape = psi.shape
    psi = psi.reshape(lead + (-1, 2**k))
    out = psi @ np.swapaxes(matrix, -1, -2)
    out = np.moveaxis(out.reshape(moved_shape), list(range(-k, 0)), axes)
    return out.reshape(lead + (2**num_qubits,))


def prob_one(states: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    """Probability of reading 1 on ``qubit`` for each state in the batch."""
    lead = states.shape[:-1]
    p = (states.real**2 + states.imag**2).reshape(lead + (2 ** (num_qubits - 1 - qubit), 2, 2**qubit))
    return p[..., 1, :].sum(axis=(-1, -2))


def apply_gate(state: StateVector, gate: GateMatrix, targets) -> StateVector:
    targets = [int(t) for t in targets]
    if len(targets) != gate.arity:
        raise InvalidTargetError(f"gate of arity {gate.arity} given {len(targets)} targets")
    if len(set(targets)) != len(targets):
        raise InvalidTargetError(f"duplicate targets {targets}")
    for t in targets:
        _check_index(t, state.num_qubits)
    amps = apply_matrix(state.amplitudes, gate.matrix, targets, state.num_qubits)
    return StateVector(amps, state.num_qubits)


def z_expectation(state: StateVector, qubit: int) -> float:
    _check_index(qubit, state.num_qubits)
    return float(1.0 - 2.0 * prob_one(state.amplitudes, qubit, state.num_qubits))


def measurement_distribution(state: StateVector, qubit: int) -> MeasurementOutcome:
    _check_index(qubit, state.num_qubits)
    p1 = float(prob_one(state.amplitudes, qubit, state.num_qubits))
    p1 = min(max(p1, 0.0), 1.0)
    return MeasurementOutcome(qubit, 1.0 - p1, p1)


def collapse(state: StateVector, qubit: int, outcome: int) -> StateVector:
    """Project ``qubit`` onto ``outcome`` and renormalise."""
    _check_index(qubit, state.num_qubits)
    if outcome not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {outcome!r}")
    idx = np.arange(2**state.num_qubits)
    keep = ((idx >> qubit) & 1) == outcome
    amps = np.where(keep, state.amplitudes, 0.0)
    p = float(np.sum(np.abs(amps) ** 2))
    if p <= 1e-12:
        raise ImpossibleOutcomeError(f"outcome {outcome} on qubit {qubit} has probability {p:.3e}")
    return StateVector(amps / np.sqrt(p), state.num_qubits)
