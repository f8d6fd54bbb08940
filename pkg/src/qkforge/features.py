"""Circuit -> DAG conversion with per-node feature vectors and min-max normalization.

Node vector layout (width ``1 + 6 + Q + 1 + 7``, 31 for Q=16)::

    [index | type one-hot x6 | target-qubit multi-hot xQ | embedding tag |
     T1_a, T2_a, T1_b, T2_b, gate_error, readout_a, readout_b]

Nodes are ordered inputs, gates (circuit order), measurements, which is a
topological order of the DAG.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .circuits import EMBEDDING, Circuit, circuit_stats
from .device import DeviceTopology

FIDELITY, PERFORMANCE = "fidelity", "performance"
DEFAULT_Q = 16
NUM_TYPES = 6
NUM_NOISE = 7


def feature_width(q_width: int = DEFAULT_Q) -> int:
    return 1 + NUM_TYPES + q_width + 1 + NUM_NOISE


def type_registry(gate_set: Sequence[str]) -> list[str]:
    """Six node-type slots: input, measure, then the device gates in declared order."""
    if len(gate_set) > NUM_TYPES - 2:
        raise ValueError(f"gate set of {len(gate_set)} does not fit {NUM_TYPES - 2} type slots")
    return ["input", "measure"] + list(gate_set)


@dataclass(frozen=True)
class CircuitGraph:
    x: np.ndarray  # (num_nodes, width)
    edges: np.ndarray  # (num_edges, 2) src -> dst
    key_mask: np.ndarray  # (num_nodes,) bool
    globals: np.ndarray  # (3,)
    mode: str
    q_width: int
    normalized: bool = False

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "q_width": self.q_width,
            "normalized": self.normalized,
            "nodes": self.x.tolist(),
            "edges": self.edges.tolist(),
            "key_mask": self.key_mask.tolist(),
            "globals": self.globals.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CircuitGraph":
        return cls(
            np.asarray(doc["nodes"], dtype=float),
            np.asarray(doc["edges"], dtype=int).reshape(-1, 2),
            np.asarray(doc["key_mask"], dtype=bool),
            np.asarray(doc["globals"], dtype=float),
            doc["mode"],
            int(doc["q_width"]),
            bool(doc.get("normalized", False)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


class _Calib:
    """Calibration lookups keyed by subgraph-local qubit index."""

    def __init__(self, topo: DeviceTopology, circuit: Circuit):
        ids = circuit.subgraph.qubit_ids
        self.q = [topo.qubit(p) for p in ids]
        self.ids = ids
        self.topo = topo
        errs = [e.two_qubit_gate_error for e in circuit.subgraph.edges]
        self.fallback = max(errs) if errs else max((c.two_qubit_gate_error for c in topo.couplings), default=0.0)

    def pair_error(self, a: int, b: int) -> float:
        c = self.topo.coupling(self.ids[a], self.ids[b])
        return c.two_qubit_gate_error if c is not None else self.fallback


def build_graph(circuit: Circuit, calib: DeviceTopology, mode: str = FIDELITY, q_width: int = DEFAULT_Q) -> CircuitGraph:
    if mode not in (FIDELITY, PERFORMANCE):
        raise ValueError(f"unknown mode {mode!r}")
    n = circuit.n
    if n > q_width:
        raise ValueError(f"circuit uses {n} qubits but the target-qubit field holds {q_width}")
    types = type_registry(calib.gate_set)
    cal = _Calib(calib, circuit)
    width = feature_width(q_width)
    ops = circuit.ops
    num_nodes = len(ops) + 2 * n
    x = np.zeros((num_nodes, width))
    t0, q0, tag, z0 = 1, 1 + NUM_TYPES, 1 + NUM_TYPES + q_width, 1 + NUM_TYPES + q_width + 1
    fidelity = mode == FIDELITY

    def fill(row, kind, qubits, noise):
        x[row, 0] = row / max(num_nodes - 1, 1)
        x[row, t0 + types.index(kind)] = 1.0
        for q in qubits:
            x[row, q0 + q] = 1.0
        if fidelity:
            x[row, z0:z0 + NUM_NOISE] = noise

    edges = []
    last = list(range(n))
    for q in range(n):
        c = cal.q[q]
        fill(q, "input", (q,), [c.t1, c.t2, 0, 0, 0, 0, 0])
    for k, op in enumerate(ops):
        row = n + k
        if op.two_qubit:
            a, b = op.qubits
            ca, cb = cal.q[a], cal.q[b]
            noise = [ca.t1, ca.t2, cb.t1, cb.t2, cal.pair_error(a, b), ca.readout_error, cb.readout_error]
        else:
            a = op.qubits[0]
            ca = cal.q[a]
            noise = [ca.t1, ca.t2, 0, 0, ca.gate_errors.get(op.kind, 0.0), ca.readout_error, 0]
        fill(row, op.kind, op.qubits, noise)
        x[row, tag] = float(op.slot == EMBEDDING)
        for q in op.qubits:
            edges.append((last[q], row))
            last[q] = row
    for q in range(n):
        row = n + len(ops) + q
        fill(row, "measure", (q,), [0, 0, 0, 0, 0, cal.q[q].readout_error, 0])
        edges.append((last[q], row))

    key = np.zeros(num_nodes, dtype=bool)
    key[n:n + len(ops)] = True
    stats = circuit_stats(circuit)
    third = stats.depth if fidelity else stats.embed_count
    glob = np.array([stats.gate_count, stats.two_qubit_count, third], dtype=float)
    return CircuitGraph(x, np.asarray(edges, dtype=int).reshape(-1, 2), key, glob, mode, q_width)


@dataclass(frozen=True)
class Normalizer:
    """Column-wise min-max scaler fitted over every node of a graph pool."""

    node_min: np.ndarray
    node_max: np.ndarray
    glob_min: np.ndarray
    glob_max: np.ndarray

    @staticmethod
    def _scale(v, lo, hi):
        span = hi - lo
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (v - lo) / safe, 0.0)

    def apply(self, graph: CircuitGraph) -> CircuitGraph:
        if graph.normalized:
            return graph
        if graph.x.shape[1] != self.node_min.size:
            raise ValueError("graph feature width does not match the fitted normalizer")
        return replace(
            graph,
            x=self._scale(graph.x, self.node_min, self.node_max),
            globals=self._scale(graph.globals, self.glob_min, self.glob_max),
            normalized=True,
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("node_min", "node_max", "glob_min", "glob_max")}

    @classmethod
    def from_dict(cls, doc: dict) -> "Normalizer":
        return cls(*(np.asarray(doc[k], dtype=float) for k in ("node_min", "node_max", "glob_min", "glob_max")))


def fit_normalizer(graphs: Iterable[CircuitGraph]) -> Normalizer:
    graphs = list(graphs)
    if not graphs:
        raise ValueError("cannot fit a normalizer on an empty pool")
    nodes = np.concatenate([g.x for g in graphs])
    glob = np.stack([g.globals for g in graphs])
    return Normalizer(nodes.min(0), nodes.max(0), glob.min(0), glob.max(0))


def apply_normalizer(normalizer: Normalizer | None, graph: CircuitGraph) -> CircuitGraph:
    if normalizer is None:
        raise ValueError("normalizer has not been fitted")
    return normalizer.apply(graph)
