"""Synthetic calibration documents for tests and desk-scale experiments.

None of these are real device data. ``torino_like`` mimics a 133-qubit
heavy-hex processor with a long tail of bad qubits: the first
``n_bad_gate`` ids in a seeded shuffle get inflated 1-qubit gate errors and a
second disjoint set of ``n_bad_readout`` ids gets inflated readout errors.
"""

from __future__ import annotations

import numpy as np

from .device import CouplingCalibration, DeviceTopology, QubitCalibration

TORINO_GATE_SET = ("rx", "rz", "cz", "id")
SEVEN_QUBIT_GATE_SET = ("rz", "x", "cx", "id")


def heavy_hex_edges(rows: int = 7, width: int = 15, bridges: int = 4, tail: int = 4) -> tuple[int, list[tuple[int, int]]]:
    """Rows of ``width`` chained qubits joined by ``bridges`` bridge qubits per gap.

    ``tail`` pendant qubits hang off the last row. Defaults give 133 qubits.
    """
    edges = []
    row_ids = []
    nxt = 0
    for _ in range(rows):
        ids = list(range(nxt, nxt + width))
        nxt += width
        edges += [(a, a + 1) for a in ids[:-1]]
        row_ids.append(ids)
    for r in range(rows - 1):
        offset = 0 if r % 2 == 0 else 2
        for k in range(bridges):
            col = offset + 4 * k
            if col >= width:
                break
            b = nxt
            nxt += 1
            edges += [(row_ids[r][col], b), (b, row_ids[r + 1][col])]
    last = row_ids[-1]
    for k in range(tail):
        col = min(2 + 4 * k, width - 1)
        edges.append((last[col], nxt))
        nxt += 1
    return nxt, edges


def _qubit(rng, qid, gate_set, gate_err=None, readout=None):
    t1 = float(rng.uniform(80.0, 300.0))
    t2 = float(min(rng.uniform(40.0, 250.0), 2 * t1))
    base = gate_err if gate_err is not None else float(rng.uniform(1.5e-4, 4e-4))
    errors = {}
    for g in gate_set:
        if g in ("cz", "cx"):
            continue
        # rz is virtual on superconducting hardware
        errors[g] = 0.0 if g == "rz" else float(base * rng.uniform(0.9, 1.1))
    ro = readout if readout is not None else float(rng.uniform(0.005, 0.025))
    return QubitCalibration(qid, t1, t2, ro, errors)


def torino_like(seed: int = 7, n_bad_gate: int = 14, n_bad_readout: int = 18) -> DeviceTopology:
    rng = np.random.default_rng(seed)
    n, edges = heavy_hex_edges()
    order = rng.permutation(n)
    bad_gate = set(order[:n_bad_gate].tolist())
    bad_readout = set(order[n_bad_gate:n_bad_gate + n_bad_readout].tolist())
    qubits = []
    for q in range(n):
        g = float(rng.uniform(2e-3, 2e-2)) if q in bad_gate else None
        ro = float(rng.uniform(0.08, 0.35)) if q in bad_readout else None
        qubits.append(_qubit(rng, q, TORINO_GATE_SET, g, ro))
    couplings = [
        CouplingCalibration(a, b, float(rng.uniform(2e-3, 1.2e-2)), float(rng.uniform(68.0, 120.0)))
        for a, b in edges
    ]
    return DeviceTopology("torino_like", n, TORINO_GATE_SET, tuple(qubits), tuple(couplings))


def injected_bad_qubits(seed: int = 7, n_bad_gate: int = 14, n_bad_readout: int = 18) -> tuple[set[int], set[int]]:
    """Ids that ``torino_like`` inflated, as (gate-error set, readout set)."""
    rng = np.random.default_rng(seed)
    n, _ = heavy_hex_edges()
    order = rng.permutation(n)
    return set(order[:n_bad_gate].tolist()), set(order[n_bad_gate:n_bad_gate + n_bad_readout].tolist())


def seven_qubit_h(seed: int = 3, gate_set=SEVEN_QUBIT_GATE_SET, name: str = "perth_like") -> DeviceTopology:
    """The 7-qubit H-shaped layout of the Falcon r5.11H family."""
    rng = np.random.default_rng(seed)
    edges = [(0, 1), (1, 2), (1, 3), (3, 5), (4, 5), (5, 6)]
    qubits = tuple(_qubit(rng, q, gate_set) for q in range(7))
    couplings = tuple(
        CouplingCalibration(a, b, float(rng.uniform(5e-3, 1.5e-2)), float(rng.uniform(250.0, 450.0)))
        for a, b in edges
    )
    return DeviceTopology(name, 7, tuple(gate_set), qubits, couplings)


def line_device(
    n: int,
    edge_errors=None,
    readout=0.0,
    gate_error=0.0,
    t1=100.0,
    t2=80.0,
    gate_set=TORINO_GATE_SET,
    name: str = "line",
) -> DeviceTopology:
    """Uniform chain 0-1-...-(n-1); handy for analytic tests."""
    if edge_errors is None:
        edge_errors = [0.01] * (n - 1)
    ro = readout if np.ndim(readout) else [readout] * n
    qubits = tuple(
        QubitCalibration(q, t1, t2, float(ro[q]), {g: gate_error for g in gate_set if g not in ("cz", "cx")})
        for q in range(n)
    )
    couplings = tuple(CouplingCalibration(q, q + 1, float(e), 300.0) for q, e in enumerate(edge_errors))
    return DeviceTopology(name, n, tuple(gate_set), qubits, couplings)
