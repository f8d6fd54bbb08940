"""Device topology, calibration data and low-noise subgraph selection.

Calibration documents are JSON::

    {"name": ..., "num_qubits": ..., "gate_set": ["rx", "rz", "cz", "id"],
     "qubits": [{"id", "t1_us", "t2_us", "readout_error", "gate_errors": {...}}],
     "couplings": [{"a", "b", "error", "duration_ns"}]}

Units are fixed: T1/T2 in microseconds, durations in nanoseconds, errors as
probabilities.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

PARAMETERIZED_GATES = frozenset({"rx", "rz"})
ONE_QUBIT_GATES = frozenset({"rx", "rz", "x", "id"})
TWO_QUBIT_GATES = frozenset({"cz", "cx"})

_ALIASES = {"i": "id", "cnot": "cx", "rx": "rx", "rz": "rz", "x": "x", "cz": "cz", "cx": "cx", "id": "id"}

DEFAULT_NOISE_ORDER = ("1q_gate", "readout", "2q_gate")

EXHAUSTIVE_MAX_N = 8
BEAM_WIDTH = 64


class CalibrationError(ValueError):
    """Raised when a calibration document violates an invariant."""


class InfeasibleSubgraphError(ValueError):
    """Raised when no connected subgraph of the requested size survives."""


def canonical_gate(name: str) -> str:
    key = name.strip().lower()
    if key not in _ALIASES:
        raise CalibrationError(f"unknown gate name {name!r}")
    return _ALIASES[key]


@dataclass(frozen=True)
class QubitCalibration:
    qubit_id: int
    t1: float
    t2: float
    readout_error: float
    gate_errors: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.t1 > 0 and self.t2 > 0):
            raise CalibrationError(f"qubit {self.qubit_id}: t1/t2 must be positive")
        if not 0.0 <= self.readout_error <= 1.0:
            raise CalibrationError(f"qubit {self.qubit_id}: readout_error outside [0,1]")
        for gate, err in self.gate_errors.items():
            if not 0.0 <= err <= 1.0:
                raise CalibrationError(f"qubit {self.qubit_id}: gate_errors[{gate}] outside [0,1]")


@dataclass(frozen=True)
class CouplingCalibration:
    qubit_a: int
    qubit_b: int
    two_qubit_gate_error: float
    gate_duration: float = 300.0

    def __post_init__(self):
        if self.qubit_a == self.qubit_b:
            raise CalibrationError(f"coupling ({self.qubit_a},{self.qubit_b}) is a self-loop")
        if not 0.0 < self.two_qubit_gate_error <= 1.0:
            raise CalibrationError(
                f"coupling ({self.qubit_a},{self.qubit_b}): error must be in (0,1], "
                f"got {self.two_qubit_gate_error}"
            )
        if self.gate_duration <= 0:
            raise CalibrationError(f"coupling ({self.qubit_a},{self.qubit_b}): duration must be positive")

    @property
    def key(self) -> tuple[int, int]:
        return (min(self.qubit_a, self.qubit_b), max(self.qubit_a, self.qubit_b))


@dataclass(frozen=True)
class DeviceTopology:
    name: str
    num_qubits: int
    gate_set: tuple[str, ...]
    qubits: tuple[QubitCalibration, ...]
    couplings: tuple[CouplingCalibration, ...]

    def __post_init__(self):
        if len(self.qubits) != self.num_qubits:
            raise CalibrationError(f"num_qubits={self.num_qubits} but {len(self.qubits)} qubit entries")
        ids = [q.qubit_id for q in self.qubits]
        if sorted(ids) != list(range(self.num_qubits)):
            raise CalibrationError("qubit ids must be exactly 0..num_qubits-1")
        seen = set()
        for c in self.couplings:
            for q in (c.qubit_a, c.qubit_b):
                if not 0 <= q < self.num_qubits:
                    raise CalibrationError(f"coupling endpoint {q} is not a valid qubit id")
            if c.key in seen:
                raise CalibrationError(f"duplicate coupling {c.key}")
            seen.add(c.key)
        object.__setattr__(self, "qubits", tuple(sorted(self.qubits, key=lambda q: q.qubit_id)))
        gates = [canonical_gate(g) for g in self.gate_set]
        if not any(g in PARAMETERIZED_GATES for g in gates):
            raise CalibrationError("gate_set needs at least one parameterized 1-qubit gate")
        if sum(g in TWO_QUBIT_GATES for g in gates) != 1:
            raise CalibrationError("gate_set needs exactly one 2-qubit gate")
        object.__setattr__(self, "gate_set", tuple(gates))

    def qubit(self, qid: int) -> QubitCalibration:
        return self.qubits[qid]

    @cached_property
    def _coupling_index(self) -> dict[tuple[int, int], CouplingCalibration]:
        return {c.key: c for c in self.couplings}

    def coupling(self, a: int, b: int) -> CouplingCalibration | None:
        return self._coupling_index.get((min(a, b), max(a, b)))

    @property
    def two_qubit_gate(self) -> str:
        return next(g for g in self.gate_set if g in TWO_QUBIT_GATES)


@dataclass(frozen=True)
class Subgraph:
    """Connected set of device qubits. Local qubit ``i`` is ``qubit_ids[i]``."""

    parent: str
    qubit_ids: tuple[int, ...]
    edges: tuple[CouplingCalibration, ...]

    def __post_init__(self):
        ids = set(self.qubit_ids)
        if len(ids) != len(self.qubit_ids):
            raise CalibrationError("subgraph qubit ids must be distinct")
        for e in self.edges:
            if e.qubit_a not in ids or e.qubit_b not in ids:
                raise CalibrationError(f"subgraph edge {e.key} leaves the qubit set")
        if self.qubit_ids and not _is_connected(ids, [e.key for e in self.edges]):
            raise CalibrationError("subgraph is not connected")

    @property
    def n(self) -> int:
        return len(self.qubit_ids)

    def local_edges(self) -> list[tuple[int, int]]:
        pos = {q: i for i, q in enumerate(self.qubit_ids)}
        return [(pos[e.qubit_a], pos[e.qubit_b]) for e in self.edges]

    def edge_errors(self) -> np.ndarray:
        return np.array([e.two_qubit_gate_error for e in self.edges], dtype=float)


# ---------------------------------------------------------------------------
# (de)serialization


def topology_from_dict(doc: dict) -> DeviceTopology:
    try:
        qubits = tuple(
            QubitCalibration(
                qubit_id=int(q["id"]),
                t1=float(q["t1_us"]),
                t2=float(q["t2_us"]),
                readout_error=float(q["readout_error"]),
                gate_errors={canonical_gate(k): float(v) for k, v in q.get("gate_errors", {}).items()},
            )
            for q in doc["qubits"]
        )
        couplings = tuple(
            CouplingCalibration(
                qubit_a=int(c["a"]),
                qubit_b=int(c["b"]),
                two_qubit_gate_error=float(c["error"]),
                gate_duration=float(c.get("duration_ns", 300.0)),
            )
            for c in doc.get("couplings", [])
        )
        return DeviceTopology(
            name=str(doc["name"]),
            num_qubits=int(doc["num_qubits"]),
            gate_set=tuple(doc["gate_set"]),
            qubits=qubits,
            couplings=couplings,
        )
    except KeyError as exc:
        raise CalibrationError(f"missing field {exc.args[0]!r}") from None


def topology_to_dict(topo: DeviceTopology) -> dict:
    return {
        "name": topo.name,
        "num_qubits": topo.num_qubits,
        "gate_set": list(topo.gate_set),
        "qubits": [
            {
                "id": q.qubit_id,
                "t1_us": q.t1,
                "t2_us": q.t2,
                "readout_error": q.readout_error,
                "gate_errors": dict(q.gate_errors),
            }
            for q in topo.qubits
        ],
        "couplings": [
            {"a": c.qubit_a, "b": c.qubit_b, "error": c.two_qubit_gate_error, "duration_ns": c.gate_duration}
            for c in topo.couplings
        ],
    }


def load_topology(path: str | Path) -> DeviceTopology:
    """Read and validate a calibration document."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CalibrationError(f"{path}: not valid JSON ({exc})") from None
    return topology_from_dict(doc)


def save_topology(topo: DeviceTopology, path: str | Path) -> None:
    Path(path).write_text(json.dumps(topology_to_dict(topo), indent=1))


def subgraph_to_dict(sub: Subgraph) -> dict:
    return {
        "parent": sub.parent,
        "qubit_ids": list(sub.qubit_ids),
        "edges": [
            {"a": e.qubit_a, "b": e.qubit_b, "error": e.two_qubit_gate_error, "duration_ns": e.gate_duration}
            for e in sub.edges
        ],
    }


def subgraph_from_dict(doc: dict) -> Subgraph:
    return Subgraph(
        parent=doc["parent"],
        qubit_ids=tuple(int(q) for q in doc["qubit_ids"]),
        edges=tuple(
            CouplingCalibration(int(e["a"]), int(e["b"]), float(e["error"]), float(e.get("duration_ns", 300.0)))
            for e in doc["edges"]
        ),
    )


def full_subgraph(topo: DeviceTopology) -> Subgraph:
    return Subgraph(topo.name, tuple(range(topo.num_qubits)), topo.couplings)


# ---------------------------------------------------------------------------
# noise-type lookups


def qubit_noise(q: QubitCalibration, noise_type: str) -> float:
    if noise_type == "readout":
        return q.readout_error
    if noise_type == "1q_gate":
        return max(q.gate_errors.values(), default=0.0)
    if noise_type.startswith("1q_gate:"):
        gate = canonical_gate(noise_type.split(":", 1)[1])
        if gate not in q.gate_errors:
            raise KeyError(f"qubit {q.qubit_id} has no calibration for gate {gate!r}")
        return q.gate_errors[gate]
    raise KeyError(f"unknown noise type {noise_type!r}")


def is_two_qubit_type(noise_type: str) -> bool:
    return noise_type == "2q_gate"


def default_exclusion(num_qubits: int) -> int:
    return math.ceil(0.1 * num_qubits)


def _sorted_worst(items: Iterable[tuple[object, float, tuple]]) -> list:
    # descending error, ties by ascending id
    return sorted(items, key=lambda t: (-t[1], t[2]))


def calib_report(topo: DeviceTopology, noise_type: str) -> list[tuple[str, float]]:
    """Rows ``(target, error)`` sorted by error, worst first; ties keep id order."""
    if is_two_qubit_type(noise_type):
        rows = [(f"{c.key[0]}-{c.key[1]}", c.two_qubit_gate_error, c.key) for c in topo.couplings]
    else:
        rows = [(f"q{q.qubit_id}", qubit_noise(q, noise_type), (q.qubit_id,)) for q in topo.qubits]
    return [(label, err) for label, err, _ in _sorted_worst(rows)]


def write_report_csv(rows: Sequence[tuple[str, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "error"])
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# subgraph selection


def _is_connected(nodes: set[int], edges: Iterable[tuple[int, int]]) -> bool:
    if not nodes:
        return True
    adj = {v: set() for v in nodes}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    start = next(iter(nodes))
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == len(nodes)


def exclude_noisy(
    topo: DeviceTopology, excluded: int, noise_types: Sequence[str] = DEFAULT_NOISE_ORDER
) -> tuple[set[int], dict[tuple[int, int], CouplingCalibration]]:
    """Strip the worst qubits/edges per noise type, in order. Returns the residue graph."""
    nodes = {q.qubit_id for q in topo.qubits}
    edges = {c.key: c for c in topo.couplings}
    if excluded <= 0:
        return nodes, edges
    for noise_type in noise_types:
        if is_two_qubit_type(noise_type):
            ranked = _sorted_worst((k, c.two_qubit_gate_error, k) for k, c in edges.items())
            for key, _, _ in ranked[:excluded]:
                del edges[key]
        else:
            ranked = _sorted_worst(
                (q.qubit_id, qubit_noise(q, noise_type), (q.qubit_id,)) for q in topo.qubits if q.qubit_id in nodes
            )
            drop = {qid for qid, _, _ in ranked[:excluded]}
            nodes -= drop
            edges = {k: c for k, c in edges.items() if k[0] not in drop and k[1] not in drop}
    return nodes, edges


def _adjacency(nodes: set[int], edges: dict[tuple[int, int], CouplingCalibration]) -> dict[int, set[int]]:
    adj = {v: set() for v in nodes}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    return adj


def _score(subset: Sequence[int], adj: dict[int, set[int]], edges: dict) -> tuple:
    members = set(subset)
    degrees = [len(adj[v] & members) for v in subset]
    errs = [edges[(a, b)].two_qubit_gate_error for a in subset for b in adj[a] if b in members and a < b]
    mean_err = float(np.mean(errs)) if errs else 0.0
    return (-max(degrees, default=0), mean_err, tuple(sorted(subset)))


def connected_subsets(adj: dict[int, set[int]], n: int) -> Iterator[tuple[int, ...]]:
    """Every connected induced vertex subset of size ``n`` exactly once (ESU enumeration)."""
    if n <= 0:
        return

    def extend(sub: list[int], ext: set[int], root: int, nbhd: set[int]):
        if len(sub) == n:
            yield tuple(sub)
            return
        ext = set(ext)
        while ext:
            w = min(ext)
            ext.discard(w)
            new_ext = ext | {u for u in adj[w] if u > root and u not in nbhd}
            yield from extend(sub + [w], new_ext, root, nbhd | adj[w] | {w})

    for v in sorted(adj):
        yield from extend([v], {u for u in adj[v] if u > v}, v, adj[v] | {v})


def _beam_search(adj: dict[int, set[int]], edges: dict, n: int, width: int = BEAM_WIDTH):
    beam = sorted(((v,) for v in adj), key=lambda s: _score(s, adj, edges))[:width]
    for _ in range(n - 1):
        grown = set()
        for s in beam:
            members = set(s)
            for v in s:
                for u in adj[v] - members:
                    grown.add(tuple(sorted(members | {u})))
        if not grown:
            return None
        beam = sorted(grown, key=lambda s: _score(s, adj, edges))[:width]
    return beam[0] if beam else None


def select_subgraph(
    topo: DeviceTopology,
    n: int,
    excluded: int | None = None,
    noise_types: Sequence[str] = DEFAULT_NOISE_ORDER,
) -> Subgraph:
    """Pick a connected ``n``-qubit region after discarding the noisiest qubits and couplings.

    Candidates are ranked by maximum vertex degree (higher first), then by mean
    two-qubit error, then by their sorted qubit ids.
    """
    if excluded is None:
        excluded = default_exclusion(topo.num_qubits)
    nodes, edges = exclude_noisy(topo, excluded, noise_types)
    if n < 1 or n > len(nodes):
        raise InfeasibleSubgraphError(f"requested {n} qubits but {len(nodes)} remain after exclusions")
    adj = _adjacency(nodes, edges)
    if n <= EXHAUSTIVE_MAX_N:
        best = min(connected_subsets(adj, n), key=lambda s: _score(s, adj, edges), default=None)
    else:
        best = _beam_search(adj, edges, n)
    if best is None:
        raise InfeasibleSubgraphError(f"no connected {n}-qubit subgraph survives exclusions")
    ids = tuple(sorted(best))
    members = set(ids)
    sub_edges = tuple(edges[k] for k in sorted(edges) if k[0] in members and k[1] in members)
    return Subgraph(topo.name, ids, sub_edges)


def placement_distribution(sub: Subgraph) -> dict[tuple[int, int], float]:
    """Probability of placing a 2-qubit gate on each edge, proportional to 1/error."""
    if not sub.edges:
        raise ValueError("subgraph has no edges")
    inv = 1.0 / sub.edge_errors()
    probs = inv / inv.sum()
    return {e.key: float(p) for e, p in zip(sub.edges, probs)}
