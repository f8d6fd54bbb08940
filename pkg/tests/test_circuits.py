import collections

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from qkforge.circuits import (
    EMBEDDING,
    TRAINABLE,
    Circuit,
    EmbeddingError,
    GateOp,
    assign_embedding,
    bind,
    compose,
    circuit_stats,
    default_gate_budget,
    dumps_circuit,
    generate_candidate,
    inverse,
    loads_circuit,
    tek_circuit,
)
from qkforge.device import select_subgraph
from qkforge.fixtures import line_device, torino_like
from qkforge.simulator import run_statevector

GATES = ("rx", "rz", "cz", "id")


@pytest.fixture(scope="module")
def sub4():
    return select_subgraph(torino_like(), 4)


def two_edge_sub(errors=(0.01, 0.03)):
    topo = line_device(3, edge_errors=list(errors))
    return select_subgraph(topo, 3, excluded=0)


def test_empty_circuit(sub4):
    c = generate_candidate(sub4, GATES, 0, np.random.default_rng(0))
    assert c.ops == ()
    s = circuit_stats(c)
    assert (s.gate_count, s.two_qubit_count, s.depth, s.embed_count) == (0, 0, 0, 0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 60))
def test_two_qubit_gates_on_edges(sub4, seed, P):
    c = generate_candidate(sub4, GATES, P, np.random.default_rng(seed))
    assert len(c.ops) == P
    edges = {frozenset(e) for e in sub4.local_edges()}
    assert all(frozenset(op.qubits) in edges for op in c.ops if op.two_qubit)


def test_generation_deterministic(sub4):
    a = generate_candidate(sub4, GATES, 40, np.random.default_rng(5))
    b = generate_candidate(sub4, GATES, 40, np.random.default_rng(5))
    assert a == b


def test_empty_gate_set(sub4):
    with pytest.raises(ValueError):
        generate_candidate(sub4, (), 5, np.random.default_rng(0))


def test_two_qubit_draw_without_edges():
    sub = select_subgraph(line_device(1, edge_errors=[]), 1, excluded=0)
    with pytest.raises(ValueError):
        generate_candidate(sub, ("cz",), 1, np.random.default_rng(0))


def test_endpoint_frequencies_chi_square():
    sub = two_edge_sub()
    c = generate_candidate(sub, ("cz",), 100_000, np.random.default_rng(11))
    counts = collections.Counter(tuple(op.qubits) for op in c.ops)
    observed = [counts[e] for e in sub.local_edges()]
    _, pval = stats.chisquare(observed, [75_000, 25_000])
    assert pval > 0.01


def test_gate_kinds_uniform(sub4):
    c = generate_candidate(sub4, GATES, 100_000, np.random.default_rng(3))
    counts = collections.Counter(op.kind for op in c.ops)
    sigma = np.sqrt(100_000 * 0.25 * 0.75)
    for kind in GATES:
        assert abs(counts[kind] - 25_000) < 3 * sigma


def test_one_qubit_targets_uniform(sub4):
    c = generate_candidate(sub4, ("rx",), 40_000, np.random.default_rng(4))
    counts = np.bincount([op.qubits[0] for op in c.ops], minlength=4)
    assert stats.chisquare(counts).pvalue > 0.01


# -- embedding


def forced_circuit(sub, n_param):
    ops = tuple(GateOp("rx", (0,), TRAINABLE, i) for i in range(n_param)) + (GateOp("cz", sub.local_edges()[0]),)
    return Circuit(sub, ops)


def test_all_parameterized_become_embedding(sub4):
    c = assign_embedding(forced_circuit(sub4, 5), 5, np.random.default_rng(0))
    assert c.num_trainable == 0
    assert [c.ops[k].index for k in c.embed_indices] == list(range(5))


def test_zero_dims_all_trainable(sub4):
    c = assign_embedding(forced_circuit(sub4, 5), 0, np.random.default_rng(0))
    assert c.num_trainable == 5 and c.embed_indices == []


def test_insufficient_parameterized(sub4):
    with pytest.raises(EmbeddingError):
        assign_embedding(forced_circuit(sub4, 3), 4, np.random.default_rng(0))


@given(st.integers(0, 2**32 - 1), st.integers(0, 14))
def test_embedding_indices_unique_and_ordered(sub4, seed, p):
    rng = np.random.default_rng(seed)
    c = generate_candidate(sub4, GATES, 80, rng)
    if c.num_parameterized < p:
        return
    e = assign_embedding(c, p, rng)
    idx = [e.ops[k].index for k in e.embed_indices]
    assert idx == list(range(p))
    trainable = [op.index for op in e.ops if op.slot == TRAINABLE]
    assert trainable == list(range(e.num_trainable))
    assert e.num_trainable + p == c.num_parameterized


def test_fourteen_embedding_slots(sub4):
    rng = np.random.default_rng(0)
    P = default_gate_budget(14, GATES)
    while True:
        c = generate_candidate(sub4, GATES, P, rng)
        if c.num_parameterized >= 14:
            break
    assert len(assign_embedding(c, 14, rng).embed_indices) == 14


@pytest.mark.parametrize("gate_set", [GATES, ("rz", "x", "cx", "id")])
def test_default_budget_meets_ninety_percent(gate_set):
    sub = two_edge_sub()
    P = default_gate_budget(14, gate_set)
    assert P >= 35
    rng = np.random.default_rng(2)
    ok = sum(generate_candidate(sub, gate_set, P, rng).num_parameterized >= 14 for _ in range(2000))
    assert ok / 2000 >= 0.88


# -- binding and inversion


def embedded(sub, seed=0, p=4, P=30):
    rng = np.random.default_rng(seed)
    while True:
        c = generate_candidate(sub, GATES, P, rng)
        if c.num_parameterized >= p:
            return assign_embedding(c, p, rng)


def test_zero_angles_act_as_identity(sub4):
    c = embedded(sub4)
    psi = run_statevector(bind(c, np.zeros(4), np.zeros(c.num_trainable)))
    assert abs(psi[0]) == pytest.approx(1.0, abs=1e-12)


def test_bind_routes_angles(sub4):
    c = embedded(sub4)
    x = np.array([0.1, 0.2, 0.3, 0.4])
    th = np.arange(c.num_trainable) + 10.0
    b = bind(c, x, th)
    for op, bop in zip(c.ops, b.ops):
        if op.slot == EMBEDDING:
            assert bop.angle == x[op.index]
        elif op.slot == TRAINABLE:
            assert bop.angle == th[op.index]
        else:
            assert bop.angle is None
    assert bind(c, x, th) == b


def test_bind_dimension_mismatch(sub4):
    c = embedded(sub4)
    with pytest.raises(ValueError):
        bind(c, np.zeros(3), np.zeros(c.num_trainable))
    with pytest.raises(ValueError):
        bind(c, np.zeros(4), np.zeros(c.num_trainable + 1))


def test_inverse_single_gates(sub4):
    b = bind(Circuit(sub4, (GateOp("rx", (0,), TRAINABLE, 0),)), [], [0.7])
    assert inverse(b).ops[0].angle == -0.7
    cz = bind(Circuit(sub4, (GateOp("cz", sub4.local_edges()[0]),)), [], [])
    assert inverse(cz) == cz


@given(st.integers(0, 2**32 - 1))
def test_inverse_is_involution(sub4, seed):
    c = embedded(sub4, seed)
    rng = np.random.default_rng(seed)
    b = bind(c, rng.uniform(0, np.pi, 4), rng.uniform(0, 2 * np.pi, c.num_trainable))
    assert inverse(inverse(b)) == b


def test_mirror_returns_to_zero_state(sub4):
    rng = np.random.default_rng(99)
    for seed in range(200):
        c = embedded(sub4, seed)
        b = bind(c, rng.uniform(0, np.pi, 4), rng.uniform(0, 2 * np.pi, c.num_trainable))
        psi = run_statevector(compose(b, inverse(b)))
        assert abs(psi[0]) ** 2 == pytest.approx(1.0, abs=1e-12)


# -- stats


def longest_path_depth(ops):
    # explicit DAG: edge from each op to the next op that shares a wire
    n = len(ops)
    succ = collections.defaultdict(set)
    for i in range(n):
        for j in range(i + 1, n):
            if set(ops[i].qubits) & set(ops[j].qubits):
                succ[i].add(j)
    depth = [1] * n
    for i in range(n):
        for j in succ[i]:
            depth[j] = max(depth[j], depth[i] + 1)
    return max(depth, default=0)


def test_stats_parallel_and_chain(sub4):
    par = Circuit(sub4, (GateOp("id", (0,)), GateOp("id", (1,))))
    assert circuit_stats(par).depth == 1
    chain = Circuit(sub4, tuple(GateOp("id", (2,)) for _ in range(7)))
    assert circuit_stats(chain).depth == 7


@given(st.integers(0, 2**32 - 1), st.integers(0, 40))
def test_depth_matches_longest_path(sub4, seed, P):
    c = generate_candidate(sub4, GATES, P, np.random.default_rng(seed))
    s = circuit_stats(c)
    assert s.depth == longest_path_depth(c.ops)
    assert s.gate_count == P
    assert s.two_qubit_count == sum(op.kind == "cz" for op in c.ops)


# -- misc


def test_gateop_invariants():
    with pytest.raises(ValueError):
        GateOp("cz", (0, 0))
    with pytest.raises(ValueError):
        GateOp("rx", (0, 1))
    with pytest.raises(ValueError):
        GateOp("x", (0,), TRAINABLE, 0)


def test_off_edge_two_qubit_rejected():
    sub = two_edge_sub()
    with pytest.raises(ValueError):
        Circuit(sub, (GateOp("cz", (0, 2)),))


def test_serialization_roundtrip(sub4):
    c = embedded(sub4, 3)
    assert loads_circuit(dumps_circuit(c)) == c


def test_tek_layout(sub4):
    c = tek_circuit(sub4, GATES, 14)
    assert not c.native
    assert [c.ops[k].index for k in c.embed_indices] == list(range(14))
    assert c.num_trainable == 4 * 2 * 4 - 14
    with pytest.raises(EmbeddingError):
        tek_circuit(sub4, GATES, 40)
