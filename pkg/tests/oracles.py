"""Independent reference implementations used only by the tests.

Everything here builds full 2^n x 2^n operators entry by entry and uses
matrix exponentials for rotations, so it shares no code path with the
strided simulator beyond ``collapse`` for branch enumeration.
"""

import itertools

import numpy as np
from scipy.linalg import expm

from qcnn_bench.quantum_state import StateVector, collapse

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
CX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def embed(matrix, targets, n):
    """Full operator for ``matrix`` on ``targets``; targets[0] is the local high bit."""
    dim = 2**n
    k = len(targets)
    tmask = sum(1 << t for t in targets)
    full = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            if (i & ~tmask) != (j & ~tmask):
                continue
            li = sum(((i >> t) & 1) << (k - 1 - pos) for pos, t in enumerate(targets))
            lj = sum(((j >> t) & 1) << (k - 1 - pos) for pos, t in enumerate(targets))
            full[i, j] = matrix[li, lj]
    return full


def prob_one(amps, qubit):
    return sum(abs(a) ** 2 for i, a in enumerate(amps) if (i >> qubit) & 1)


def z_expect(amps, qubit):
    return sum(abs(a) ** 2 * (1 if not (i >> qubit) & 1 else -1) for i, a in enumerate(amps))


def rz(t):
    return expm(-0.5j * t * Z)


def ry(t):
    return expm(-0.5j * t * Y)


def phase(t):
    return np.diag([1.0, np.exp(1j * t)])


def euler(p):
    return rz(p[0]) @ ry(p[1]) @ rz(p[2])


def conv_unitary(p):
    core = expm(1j * (p[6] * np.kron(X, X) + p[7] * np.kron(Y, Y) + p[8] * np.kron(Z, Z)))
    return np.kron(euler(p[9:12]), euler(p[12:15])) @ core @ np.kron(euler(p[0:3]), euler(p[3:6]))


def controlled(w):
    out = np.eye(4, dtype=complex)
    out[2:, 2:] = w
    return out


def encode_dense(x, kind="Z", reps=1):
    n = len(x)
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1
    for _ in range(reps):
        for q in range(n):
            psi = embed(H, [q], n) @ psi
            psi = embed(phase(2 * x[q]), [q], n) @ psi
        if kind == "ZZ":
            for q in range(n - 1):
                angle = 2 * (np.pi - x[q]) * (np.pi - x[q + 1])
                psi = embed(CX, [q, q + 1], n) @ psi
                psi = embed(phase(angle), [q + 1], n) @ psi
                psi = embed(CX, [q, q + 1], n) @ psi
    return psi


def block_unitary(block, theta):
    p = theta[block.offset : block.offset + block.length]
    if block.role in ("conv", "fc"):
        return conv_unitary(p)
    if block.role == "pool":
        return controlled(euler(p))
    if block.role == "rot":
        return euler(p)
    return CX


def dense_readout(arch, theta, x, kind="Z", reps=1):
    """Deferred-measurement pipeline with dense matrices."""
    psi = encode_dense(x, kind, reps)
    for block in arch.blocks():
        psi = embed(block_unitary(block, theta), list(block.targets), arch.num_qubits) @ psi
    return prob_one(psi, arch.readout_qubit)


def branch_readout(arch, theta, x, kind="Z", reps=1):
    """Measure each discarded qubit, rotate the kept one only on outcome 1,
    and average the readout probability over all branches."""
    n = arch.num_qubits
    blocks = arch.blocks()

    def walk(psi, k, weight):
        if weight < 1e-300:
            return 0.0
        if k == len(blocks):
            return weight * prob_one(psi.amplitudes, arch.readout_qubit)
        block = blocks[k]
        if block.role != "pool":
            amps = embed(block_unitary(block, theta), list(block.targets), n) @ psi.amplitudes
            return walk(StateVector(amps), k + 1, weight)
        p1 = prob_one(psi.amplitudes, block.discarded_qubit)
        total = 0.0
        for outcome, p in ((0, 1 - p1), (1, p1)):
            if p <= 1e-12:
                continue
            branch = collapse(psi, block.discarded_qubit, outcome)
            amps = branch.amplitudes
            if outcome == 1:
                w = euler(theta[block.offset : block.offset + 3])
                amps = embed(w, [block.kept_qubit], n) @ amps
            total += walk(StateVector(amps), k + 1, weight * p)
        return total

    return walk(StateVector(encode_dense(x, kind, reps)), 0, 1.0)


def random_state(rng, n):
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


def random_unitary(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def numeric_grad(f, x, eps=1e-4):
    """Central differences of scalar ``f`` over every entry of array ``x`` (modified in place and restored)."""
    g = np.zeros_like(x)
    for idx in itertools.product(*[range(s) for s in x.shape]):
        old = x[idx]
        x[idx] = old + eps
        fp = f()
        x[idx] = old - eps
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * eps)
    return g
