import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcnn_bench.ansatz import (
    ConvBlockSpec,
    Layer,
    PoolBlockSpec,
    QcnnArchitecture,
    build_qcnn,
    build_qnn,
    conv_block_matrix,
    forward,
    pool_block_apply,
    predict,
    readout_probabilities,
    shifted_readouts,
)
from qcnn_bench.errors import ArchitectureError
from qcnn_bench.feature_encoding import FeatureMapKind, encode, encode_batch
from qcnn_bench.quantum_state import StateVector, measurement_distribution, new_zero_state

from oracles import branch_readout, conv_unitary, dense_readout, random_state

Z1 = FeatureMapKind("Z", 1)


def test_conv_block_zero_is_identity():
    np.testing.assert_allclose(conv_block_matrix(np.zeros(15)).matrix, np.eye(4), atol=1e-12)


def test_conv_block_zz_only():
    p = np.zeros(15)
    p[8] = np.pi / 4
    e, f = np.exp(1j * np.pi / 4), np.exp(-1j * np.pi / 4)
    np.testing.assert_allclose(conv_block_matrix(p).matrix, np.diag([e, f, f, e]), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_conv_block_unitary_and_matches_expm(seed):
    p = np.random.default_rng(seed).uniform(-np.pi, np.pi, 15)
    u = conv_block_matrix(p).matrix
    assert np.max(np.abs(u.conj().T @ u - np.eye(4))) < 1e-10
    np.testing.assert_allclose(u, conv_unitary(p), atol=1e-10)


def test_conv_block_rejects_bad_params():
    with pytest.raises(ValueError):
        conv_block_matrix([0.0] * 14)
    with pytest.raises(ValueError):
        conv_block_matrix([np.inf] + [0.0] * 14)


def test_build_qcnn_two_qubits():
    arch = build_qcnn(2)
    assert arch.parameter_count == 18
    assert arch.fc_block is None
    assert arch.readout_qubit == 0
    kinds = [(layer.kind, [b.targets for b in layer.blocks]) for layer in arch.layers]
    assert kinds == [("conv", [(0, 1)]), ("pool", [(1, 0)])]


def test_build_qcnn_four_qubits_tiling():
    arch = build_qcnn(4)
    # 4 conv blocks + 2 pools, then fc + final pool
    assert arch.parameter_count == 4 * 15 + 2 * 3 + 15 + 3 == 84
    conv = arch.layers[0].blocks
    assert [b.pair for b in conv] == [(0, 1), (2, 3), (1, 2), (3, 0)]
    assert [b.targets for b in arch.layers[1].blocks] == [(1, 0), (3, 2)]
    assert arch.fc_block.pair == (0, 2)


def test_build_qcnn_eight_qubits():
    arch = build_qcnn(8)
    assert [b.pair for b in arch.layers[0].blocks] == [(0, 1), (2, 3), (4, 5), (6, 7), (1, 2), (3, 4), (5, 6), (7, 0)]
    retired = set()
    for layer in arch.layers:
        for b in layer.blocks:
            assert not retired & set(b.targets)
        if layer.kind == "pool":
            retired |= {b.discarded_qubit for b in layer.blocks}
    assert set(range(8)) - retired == {0} == {arch.readout_qubit}
    assert arch.parameter_count == 216


@pytest.mark.parametrize("n,count", [(2, 18), (4, 84), (8, 216), (16, 480)])
def test_parameter_slices_tile(n, count):
    arch = build_qcnn(n)
    spans = sorted((b.offset, b.offset + b.length) for b in arch.blocks())
    assert spans[0][0] == 0 and spans[-1][1] == count == arch.parameter_count
    assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))


def test_unsupported_size():
    with pytest.raises(ArchitectureError):
        build_qcnn(6)


def test_retired_qubit_architecture_is_unconstructible():
    layers = (
        Layer("pool", (PoolBlockSpec(1, 0, 0),)),
        Layer("conv", (ConvBlockSpec((0, 1), 3),)),
    )
    with pytest.raises(ArchitectureError):
        QcnnArchitecture(2, layers, None, 0, 18)


def test_overlapping_slices_rejected():
    layers = (Layer("conv", (ConvBlockSpec((0, 1), 0),)), Layer("pool", (PoolBlockSpec(1, 0, 10),)))
    with pytest.raises(ArchitectureError):
        QcnnArchitecture(2, layers, None, 0, 18)


def test_summary_lists_blocks():
    text = build_qcnn(4).summary()
    assert "pool 1 -> 0" in text and "fc (0, 2)" in text and "theta[81:84]" in text


def test_qnn_layout():
    arch = build_qnn(8, 2)
    assert arch.parameter_count == 48
    assert arch.readout_qubit == 0
    ring = [b.targets for b in arch.layers[0].blocks if b.role == "cnot"]
    assert ring == [(q, (q + 1) % 8) for q in range(8)]
    with pytest.raises(ArchitectureError):
        build_qnn(4, 0)


# --- pooling ------------------------------------------------------------------


def test_pool_zero_params_is_identity():
    psi = StateVector(random_state(np.random.default_rng(0), 3))
    out = pool_block_apply(psi, PoolBlockSpec(2, 0, 0), [0, 0, 0])
    np.testing.assert_allclose(out.amplitudes, psi.amplitudes, atol=1e-15)


def test_pool_control_in_zero_is_identity():
    rng = np.random.default_rng(1)
    # qubit 2 is exactly |0>: only the first 4 amplitudes are populated
    amps = np.zeros(8, dtype=complex)
    amps[:4] = random_state(rng, 2)
    out = pool_block_apply(StateVector(amps), PoolBlockSpec(2, 0, 0), rng.uniform(-3, 3, 3))
    np.testing.assert_allclose(out.amplitudes, amps, atol=1e-15)


def test_pool_retired_qubit_rejected():
    with pytest.raises(ArchitectureError):
        pool_block_apply(new_zero_state(2), PoolBlockSpec(1, 0, 0), [0, 0, 0], retired={1})


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pool_matches_branch_enumeration_three_qubits(seed):
    from oracles import embed, euler, prob_one
    from qcnn_bench.quantum_state import collapse

    rng = np.random.default_rng(seed)
    psi = StateVector(random_state(rng, 3))
    params = rng.uniform(-np.pi, np.pi, 3)
    deferred = measurement_distribution(pool_block_apply(psi, PoolBlockSpec(1, 0, 0), params), 0).probability_one
    expected = 0.0
    p1 = prob_one(psi.amplitudes, 1)
    for outcome, p in ((0, 1 - p1), (1, p1)):
        if p < 1e-12:
            continue
        amps = collapse(psi, 1, outcome).amplitudes
        if outcome:
            amps = embed(euler(params), [0], 3) @ amps
        expected += p * prob_one(amps, 0)
    assert abs(deferred - expected) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([2, 4]), st.integers(0, 2**32 - 1), st.sampled_from(["Z", "ZZ"]))
def test_deferred_pooling_equals_measure_and_branch(n, seed, kind):
    rng = np.random.default_rng(seed)
    arch = build_qcnn(n)
    theta = rng.uniform(-np.pi, np.pi, arch.parameter_count)
    x = rng.uniform(0, np.pi, n)
    got = forward(arch, theta, x, FeatureMapKind(kind))
    assert abs(got - branch_readout(arch, theta, x, kind)) < 1e-10


# --- forward ------------------------------------------------------------------


def test_two_qubit_zero_theta_is_encoding_readout():
    arch = build_qcnn(2)
    x = np.array([0.4, 2.2])
    expected = measurement_distribution(encode(x, Z1), 0).probability_one
    assert forward(arch, np.zeros(18), x, Z1) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_four_qubit_forward_matches_dense_pipeline(seed):
    rng = np.random.default_rng(seed)
    arch = build_qcnn(4)
    theta = rng.uniform(-np.pi, np.pi, arch.parameter_count)
    x = rng.uniform(0, np.pi, 4)
    assert abs(forward(arch, theta, x, Z1) - dense_readout(arch, theta, x)) < 1e-10


def test_qnn_forward_matches_dense_pipeline():
    rng = np.random.default_rng(9)
    arch = build_qnn(3, 2)
    theta = rng.uniform(-np.pi, np.pi, arch.parameter_count)
    x = rng.uniform(0, np.pi, 3)
    assert abs(forward(arch, theta, x, FeatureMapKind("ZZ")) - dense_readout(arch, theta, x, "ZZ")) < 1e-10


def test_forward_is_probability_over_many_draws():
    rng = np.random.default_rng(5)
    arch = build_qcnn(4)
    thetas = rng.uniform(-np.pi, np.pi, (40, arch.parameter_count))
    X = rng.uniform(0, np.pi, (25, 4))
    p = readout_probabilities(arch, thetas, encode_batch(X, Z1))
    assert p.shape == (40, 25)
    assert np.all((p >= 0) & (p <= 1))


def test_forward_deterministic_and_lipschitz():
    rng = np.random.default_rng(6)
    arch = build_qcnn(4)
    theta = rng.uniform(-np.pi, np.pi, arch.parameter_count)
    x = rng.uniform(0, np.pi, 4)
    base = forward(arch, theta, x)
    assert forward(arch, theta, x) == base
    # the readout is a trigonometric polynomial with unit-size frequencies;
    # the Lipschitz constant is bounded by the number of parameters
    for scale in (1e-3, 1e-5, 1e-7):
        delta = rng.normal(size=theta.size)
        delta *= scale / np.linalg.norm(delta)
        assert abs(forward(arch, theta + delta, x) - base) <= arch.parameter_count * scale


def test_shifted_readouts_match_stacked_evaluation():
    rng = np.random.default_rng(8)
    for arch in (build_qcnn(4), build_qnn(4, 2)):
        theta = rng.uniform(-np.pi, np.pi, arch.parameter_count)
        states = encode_batch(rng.uniform(0, np.pi, (3, 4)))
        shifts = [(j, s) for j in range(arch.parameter_count) for s in (0.3, -1.1)]
        stacked = np.tile(theta, (len(shifts), 1))
        for r, (j, s) in enumerate(shifts):
            stacked[r, j] += s
        np.testing.assert_allclose(
            shifted_readouts(arch, theta, states, shifts), readout_probabilities(arch, stacked, states), atol=1e-12
        )


def test_predict_width_mismatch():
    with pytest.raises(ValueError):
        predict(build_qcnn(4), np.zeros(84), np.zeros((2, 3)))
