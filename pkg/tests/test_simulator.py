import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracle
from qkforge.circuits import TRAINABLE, BoundCircuit, Circuit, GateOp, assign_embedding, bind, generate_candidate
from qkforge.device import select_subgraph
from qkforge.fixtures import line_device, torino_like
from qkforge.simulator import (
    CZ,
    CNOT,
    NoiseModel,
    SimulationLimitError,
    X,
    depolarizing_kraus,
    gate_matrix,
    is_trace_preserving,
    kernel_entry,
    measure_distribution,
    pst,
    run_density,
    run_statevector,
    simulate_batch,
    thermal_relaxation_kraus,
)

GATES = ("rx", "rz", "cz", "id")


def op(kind, *qubits, angle=None):
    slot = TRAINABLE if kind in ("rx", "rz") else "none"
    return GateOp(kind, tuple(qubits), slot, 0 if slot != "none" else -1, angle)


def random_bound(n, P, seed, gate_set=GATES):
    topo = line_device(n, edge_errors=[0.01 + 0.002 * i for i in range(n - 1)])
    sub = select_subgraph(topo, n, excluded=0)
    if n == 1:
        gate_set = [g for g in gate_set if g not in ("cz", "cx")]
    rng = np.random.default_rng(seed)
    c = generate_candidate(sub, gate_set, P, rng)
    return bind(c, [], rng.uniform(0, 2 * np.pi, c.num_trainable))


def random_noise(n, rng, **flags):
    gates = [{k: float(rng.uniform(0, 0.05)) for k in ("rx", "rz", "x", "id")} for _ in range(n)]
    pairs = {(q, q + 1): float(rng.uniform(0, 0.08)) for q in range(n - 1)}
    durs = {(q, q + 1): float(rng.uniform(100, 500)) for q in range(n - 1)}
    return NoiseModel(
        n,
        t1_ns=rng.uniform(5e3, 5e4, n),
        t2_ns=rng.uniform(3e3, 6e4, n),
        readout=rng.uniform(0, 0.1, n),
        gate_errors=gates,
        pair_errors=pairs,
        pair_durations=durs,
        fallback_pair_error=0.02,
        **flags,
    )


# -- gate matrices and channels


@given(st.floats(-10, 10))
def test_gate_matrices_unitary(theta):
    for kind in ("rx", "rz", "x", "id", "cx", "cz"):
        U = gate_matrix(kind, theta)
        assert np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))) <= 1e-12


def test_paper_gate_matrices():
    assert np.array_equal(CZ, np.diag([1, 1, 1, -1]))
    assert np.array_equal(CNOT[2:, 2:], X)


@given(st.floats(0, 1), st.integers(1, 2))
def test_depolarizing_trace_preserving(p, k):
    assert is_trace_preserving(depolarizing_kraus(p, k))


@given(st.floats(0, 5e3), st.floats(1, 1e5), st.floats(1, 2e5))
def test_relaxation_trace_preserving(t, t1, t2):
    assert is_trace_preserving(thermal_relaxation_kraus(t, t1, t2))


def test_invalid_channel_parameters():
    with pytest.raises(ValueError):
        depolarizing_kraus(1.5)
    with pytest.raises(ValueError):
        thermal_relaxation_kraus(10, 0, 5)
    with pytest.raises(ValueError):
        NoiseModel.uniform(2, p1=-0.1)


# -- statevector


def test_empty_circuit_statevector():
    psi = run_statevector(BoundCircuit(3, ()))
    assert psi[0] == 1 and np.count_nonzero(psi) == 1


def test_rx_pi():
    psi = run_statevector(BoundCircuit(1, (op("rx", 0, angle=np.pi),)))
    assert psi[1] == pytest.approx(-1j, abs=1e-15)


def test_cz_on_11():
    psi = run_statevector(BoundCircuit(2, (op("x", 0), op("x", 1), op("cz", 0, 1))))
    assert psi[3] == pytest.approx(-1)


def test_statevector_limit():
    with pytest.raises(SimulationLimitError):
        run_statevector(BoundCircuit(13, ()))
    with pytest.raises(SimulationLimitError):
        run_density(BoundCircuit(9, ()), NoiseModel.noiseless(9))


@given(st.integers(1, 5), st.integers(0, 40), st.integers(0, 2**32 - 1), st.sampled_from([GATES, ("rz", "x", "cx", "id")]))
def test_statevector_matches_full_matrix_oracle(n, P, seed, gate_set):
    b = random_bound(n, P, seed, gate_set)
    psi = run_statevector(b)
    assert np.max(np.abs(psi - oracle.statevector(b))) <= 1e-12
    assert abs(np.vdot(psi, psi) - 1) <= 1e-10


@given(st.integers(0, 2**32 - 1))
def test_batched_statevector_matches_single(seed):
    sub = select_subgraph(torino_like(), 4)
    rng = np.random.default_rng(seed)
    while True:
        c = generate_candidate(sub, GATES, 30, rng)
        if c.num_parameterized >= 3:
            break
    c = assign_embedding(c, 3, rng)
    X_ = rng.uniform(0, np.pi, (5, 3))
    th = rng.uniform(0, 2 * np.pi, c.num_trainable)
    batch = simulate_batch(c, X_, th)
    for row, psi in zip(X_, batch):
        assert np.max(np.abs(psi - run_statevector(bind(c, row, th)))) <= 1e-12


# -- density


@given(st.integers(1, 4), st.integers(0, 25), st.integers(0, 2**32 - 1))
def test_density_matches_channel_oracle(n, P, seed):
    b = random_bound(n, P, seed)
    noise = random_noise(n, np.random.default_rng(seed))
    rho = run_density(b, noise)
    assert np.max(np.abs(rho - oracle.density(b, noise))) <= 1e-10
    assert np.max(np.abs(rho - rho.conj().T)) <= 1e-10
    assert abs(np.trace(rho) - 1) <= 1e-10
    assert np.linalg.eigvalsh(rho).min() >= -1e-9
    dist = measure_distribution(rho, noise)
    assert np.max(np.abs(dist - oracle.readout(rho, noise.readout))) <= 1e-12
    assert abs(dist.sum() - 1) <= 1e-10


def test_zero_noise_density_is_projector():
    rng = np.random.default_rng(5)
    for i in range(500):
        n = int(rng.integers(1, 7))
        b = random_bound(n, int(rng.integers(0, 30)), i)
        psi = run_statevector(b)
        rho = run_density(b, NoiseModel.noiseless(n))
        assert np.max(np.abs(rho - np.outer(psi, psi.conj()))) <= 1e-9


@pytest.mark.parametrize("p", [0.0, 0.1, 0.37, 1.0])
def test_depolarizing_after_identity(p):
    noise = NoiseModel.uniform(1, p1=p, relaxation=False)
    rho = run_density(BoundCircuit(1, (op("id", 0),)), noise)
    expected = (1 - p) * np.diag([1, 0]) + p * np.eye(2) / 2
    assert np.max(np.abs(rho - expected)) <= 1e-14


@pytest.mark.parametrize("t1", [1e3, 5e3, 8e4])
def test_amplitude_damping_population(t1):
    noise = NoiseModel.uniform(1, t1_ns=t1, t2_ns=2 * t1, depolarizing=False)
    rho = run_density(BoundCircuit(1, (op("x", 0), op("id", 0))), noise)
    t = 2 * noise.duration_1q
    assert rho[1, 1].real == pytest.approx(np.exp(-t / t1), abs=1e-12)


def test_readout_confusion_examples():
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    noise = NoiseModel.uniform(1, readout=0.02)
    assert measure_distribution(rho0, noise) == pytest.approx([0.98, 0.02], abs=1e-15)
    assert measure_distribution(np.eye(2) / 2, NoiseModel.uniform(1, readout=0.3)) == pytest.approx([0.5, 0.5])
    rho = np.diag([0.2, 0.3, 0.1, 0.4]).astype(complex)
    assert measure_distribution(rho, NoiseModel.noiseless(2)) == pytest.approx([0.2, 0.3, 0.1, 0.4])


def test_calibration_noise_model(torino):
    sub = select_subgraph(torino, 4)
    noise = NoiseModel.from_calibration(torino, sub)
    for i, q in enumerate(sub.qubit_ids):
        assert noise.t1_ns[i] == torino.qubit(q).t1 * 1e3
        assert noise.readout[i] == torino.qubit(q).readout_error
    for a, b in sub.local_edges():
        qa, qb = sub.qubit_ids[a], sub.qubit_ids[b]
        assert noise.pair_errors[(a, b)] == torino.coupling(qa, qb).two_qubit_gate_error


# -- PST


@pytest.mark.parametrize("n", range(1, 7))
@pytest.mark.parametrize("eps", [0.0, 0.013, 0.2])
def test_identity_pst_readout_only(n, eps):
    noise = NoiseModel.uniform(n, readout=eps, relaxation=False)
    b = BoundCircuit(n, tuple(op("id", q) for q in range(n)))
    assert abs(pst(b, noise) - (1 - eps) ** n) <= 1e-12


def test_noiseless_pst_is_one():
    for seed in range(200):
        b = random_bound(4, 30, seed)
        assert abs(pst(b, NoiseModel.noiseless(4)) - 1.0) <= 1e-12


def test_shot_estimate_within_three_sigma():
    b = random_bound(3, 20, 8)
    noise = NoiseModel.uniform(3, p1=0.03, p2=0.08, relaxation=False)
    exact = pst(b, noise)
    shots = 100_000
    est = pst(b, noise, shots=shots, rng=np.random.default_rng(0))
    assert abs(est - exact) <= 3 * np.sqrt(exact * (1 - exact) / shots)


def test_pst_monotone_in_depolarizing():
    b = random_bound(3, 25, 2)
    values = [pst(b, NoiseModel.uniform(3, p1=p, p2=2 * p, relaxation=False)) for p in np.linspace(0, 0.3, 13)]
    assert all(later <= earlier + 1e-12 for earlier, later in zip(values, values[1:]))


# -- kernel entries


def test_kernel_entry_examples():
    zero, one = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
    plus = np.array([1, 1], dtype=complex) / np.sqrt(2)
    assert kernel_entry(zero, zero) == 1.0
    assert kernel_entry(zero, one) == 0.0
    assert kernel_entry(zero, plus) == pytest.approx(0.5, abs=1e-15)
    assert kernel_entry(np.outer(zero, zero), np.outer(plus, plus.conj())) == pytest.approx(0.5)
    assert kernel_entry(zero, np.outer(plus, plus.conj())) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        kernel_entry(zero, np.zeros(4))
