"""Circuit IR, noise-weighted random generation, data-embedding assignment and binding."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import binom

from .device import (
    PARAMETERIZED_GATES,
    TWO_QUBIT_GATES,
    Subgraph,
    canonical_gate,
    placement_distribution,
    subgraph_from_dict,
    subgraph_to_dict,
)

NONE, TRAINABLE, EMBEDDING = "none", "trainable", "embedding"


class EmbeddingError(ValueError):
    """Raised when a circuit has fewer parameterized gates than data dimensions."""


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple[int, ...]
    slot: str = NONE
    index: int = -1
    angle: float | None = None

    def __post_init__(self):
        want = 2 if self.kind in TWO_QUBIT_GATES else 1
        if len(self.qubits) != want or len(set(self.qubits)) != want:
            raise ValueError(f"{self.kind} needs {want} distinct qubit(s), got {self.qubits}")
        if self.kind not in PARAMETERIZED_GATES and self.slot != NONE:
            raise ValueError(f"{self.kind} is not parameterized and cannot carry a {self.slot} slot")

    @property
    def parameterized(self) -> bool:
        return self.kind in PARAMETERIZED_GATES

    @property
    def two_qubit(self) -> bool:
        return self.kind in TWO_QUBIT_GATES


@dataclass(frozen=True)
class Circuit:
    """Gate list over the local qubits of ``subgraph``.

    ``native`` circuits only place 2-qubit gates on subgraph edges; fixed
    ansatze such as TEK set it to False.
    """

    subgraph: Subgraph
    ops: tuple[GateOp, ...]
    native: bool = True
    n: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n", self.subgraph.n)
        edges = {frozenset(e) for e in self.subgraph.local_edges()}
        for op in self.ops:
            if any(not 0 <= q < self.n for q in op.qubits):
                raise ValueError(f"{op.kind} on {op.qubits} outside {self.n} local qubits")
            if self.native and op.two_qubit and frozenset(op.qubits) not in edges:
                raise ValueError(f"{op.kind} on {op.qubits} is not a subgraph edge")

    @property
    def num_trainable(self) -> int:
        return sum(op.slot == TRAINABLE for op in self.ops)

    @property
    def embed_indices(self) -> list[int]:
        return [k for k, op in enumerate(self.ops) if op.slot == EMBEDDING]

    @property
    def num_parameterized(self) -> int:
        return sum(op.parameterized for op in self.ops)


@dataclass(frozen=True)
class BoundCircuit:
    n: int
    ops: tuple[GateOp, ...]


@dataclass(frozen=True)
class CircuitStats:
    gate_count: int
    two_qubit_count: int
    depth: int
    embed_count: int


# ---------------------------------------------------------------------------
# generation


def parameterized_fraction(gate_set: Sequence[str]) -> float:
    gates = [canonical_gate(g) for g in gate_set]
    return sum(g in PARAMETERIZED_GATES for g in gates) / len(gates)


def default_gate_budget(p_dims: int, gate_set: Sequence[str], target: float = 0.9) -> int:
    """Smallest P >= max(2.5 p, 30) giving at least ``target`` odds of >= p parameterized gates."""
    frac = parameterized_fraction(gate_set)
    budget = max(math.ceil(2.5 * p_dims), 30)
    while p_dims > 0 and binom.sf(p_dims - 1, budget, frac) < target:
        budget += 1
    return budget


def generate_candidate(
    subgraph: Subgraph, gate_set: Sequence[str], p_gates: int, rng: np.random.Generator
) -> Circuit:
    """Random hardware-native circuit of ``p_gates`` gates.

    Gate kinds are uniform over ``gate_set``, 1-qubit targets uniform over the
    subgraph, and 2-qubit gates land on edge ``j`` with probability
    proportional to ``1 / e_j``. Parameterized gates start as trainable slots.
    """
    gates = [canonical_gate(g) for g in gate_set]
    if not gates:
        raise ValueError("empty gate set")
    local_edges = subgraph.local_edges()
    probs = np.array(list(placement_distribution(subgraph).values())) if local_edges else None
    ops = []
    n_train = 0
    for _ in range(p_gates):
        kind = gates[rng.integers(len(gates))]
        if kind in TWO_QUBIT_GATES:
            if probs is None:
                raise ValueError("drew a 2-qubit gate but the subgraph has no edges")
            qubits = local_edges[rng.choice(len(local_edges), p=probs)]
        else:
            qubits = (int(rng.integers(subgraph.n)),)
        if kind in PARAMETERIZED_GATES:
            ops.append(GateOp(kind, tuple(qubits), TRAINABLE, n_train))
            n_train += 1
        else:
            ops.append(GateOp(kind, tuple(qubits)))
    return Circuit(subgraph, tuple(ops))


def assign_embedding(circuit: Circuit, p_dims: int, rng: np.random.Generator) -> Circuit:
    """Tag ``p_dims`` random parameterized gates as feature carriers; the rest become trainable."""
    param_pos = [k for k, op in enumerate(circuit.ops) if op.parameterized]
    if len(param_pos) < p_dims:
        raise EmbeddingError(f"circuit has {len(param_pos)} parameterized gates, needs {p_dims}")
    chosen = set(rng.choice(param_pos, size=p_dims, replace=False).tolist()) if p_dims else set()
    ops = []
    n_embed = n_train = 0
    for k, op in enumerate(circuit.ops):
        if not op.parameterized:
            ops.append(op)
        elif k in chosen:
            ops.append(replace(op, slot=EMBEDDING, index=n_embed, angle=None))
            n_embed += 1
        else:
            ops.append(replace(op, slot=TRAINABLE, index=n_train, angle=None))
            n_train += 1
    return replace(circuit, ops=tuple(ops))


def bind(circuit: Circuit, data: Sequence[float], params: Sequence[float]) -> BoundCircuit:
    data = np.asarray(data, dtype=float).ravel()
    params = np.asarray(params, dtype=float).ravel()
    n_embed = len(circuit.embed_indices)
    if data.size != n_embed:
        raise ValueError(f"circuit embeds {n_embed} features, got {data.size}")
    if params.size != circuit.num_trainable:
        raise ValueError(f"circuit has {circuit.num_trainable} trainable slots, got {params.size}")
    ops = []
    for op in circuit.ops:
        if op.slot == EMBEDDING:
            op = replace(op, angle=float(data[op.index]))
        elif op.slot == TRAINABLE:
            op = replace(op, angle=float(params[op.index]))
        ops.append(op)
    return BoundCircuit(circuit.n, tuple(ops))


def inverse(bound: BoundCircuit) -> BoundCircuit:
    """Adjoint circuit: reversed order, rotation angles negated (the rest are self-inverse)."""
    ops = []
    for op in reversed(bound.ops):
        if op.parameterized:
            op = replace(op, angle=-op.angle)
        ops.append(op)
    return BoundCircuit(bound.n, tuple(ops))


def compose(first: BoundCircuit, second: BoundCircuit) -> BoundCircuit:
    if first.n != second.n:
        raise ValueError("qubit counts differ")
    return BoundCircuit(first.n, first.ops + second.ops)


def circuit_stats(circuit: Circuit | BoundCircuit) -> CircuitStats:
    level = [0] * circuit.n
    two = 0
    for op in circuit.ops:
        d = max(level[q] for q in op.qubits) + 1
        for q in op.qubits:
            level[q] = d
        two += op.two_qubit
    return CircuitStats(
        gate_count=len(circuit.ops),
        two_qubit_count=two,
        depth=max(level, default=0),
        embed_count=sum(op.slot == EMBEDDING for op in circuit.ops),
    )


def tek_circuit(subgraph: Subgraph, gate_set: Sequence[str], p_dims: int, blocks: int = 4) -> Circuit:
    """Fixed TEK ansatz: per block, two layers of rotations then a ring of 2-qubit gates.

    The first ``p_dims`` rotations in circuit order carry the data; the rest are
    trainable. Ring links that are not device couplings are kept as-is (the
    circuit is marked non-native).
    """
    gates = [canonical_gate(g) for g in gate_set]
    rotations = [g for g in gates if g in PARAMETERIZED_GATES]
    layer_kinds = (rotations * 2)[:2]
    entangler = next(g for g in gates if g in TWO_QUBIT_GATES)
    n = subgraph.n
    ring = [(q, (q + 1) % n) for q in range(n)] if n > 2 else ([(0, 1)] if n == 2 else [])
    ops = []
    for _ in range(blocks):
        for kind in layer_kinds:
            ops += [GateOp(kind, (q,), TRAINABLE, 0) for q in range(n)]
        ops += [GateOp(entangler, pair) for pair in ring]
    if sum(op.parameterized for op in ops) < p_dims:
        raise EmbeddingError(f"TEK with {blocks} blocks on {n} qubits cannot embed {p_dims} features")
    out = []
    n_embed = n_train = 0
    for op in ops:
        if op.parameterized and n_embed < p_dims:
            op = replace(op, slot=EMBEDDING, index=n_embed)
            n_embed += 1
        elif op.parameterized:
            op = replace(op, index=n_train)
            n_train += 1
        out.append(op)
    return Circuit(subgraph, tuple(out), native=False)


# ---------------------------------------------------------------------------
# documents


def _op_to_dict(op: GateOp) -> dict:
    doc = {"kind": op.kind, "qubits": list(op.qubits), "slot": {"type": op.slot, "index": op.index}}
    if op.angle is not None:
        doc["angle"] = op.angle
    return doc


def _op_from_dict(doc: dict) -> GateOp:
    slot = doc.get("slot", {"type": NONE, "index": -1})
    return GateOp(
        canonical_gate(doc["kind"]),
        tuple(int(q) for q in doc["qubits"]),
        slot["type"],
        int(slot["index"]),
        doc.get("angle"),
    )


def circuit_to_dict(circuit: Circuit) -> dict:
    return {
        "subgraph_ref": subgraph_to_dict(circuit.subgraph),
        "n": circuit.n,
        "native": circuit.native,
        "ops": [_op_to_dict(op) for op in circuit.ops],
    }


def circuit_from_dict(doc: dict) -> Circuit:
    sub = subgraph_from_dict(doc["subgraph_ref"])
    circuit = Circuit(sub, tuple(_op_from_dict(o) for o in doc["ops"]), native=doc.get("native", True))
    if circuit.n != doc.get("n", circuit.n):
        raise ValueError("document qubit count does not match its subgraph")
    return circuit


def dumps_circuit(circuit: Circuit) -> str:
    return json.dumps(circuit_to_dict(circuit), separators=(",", ":"))


def loads_circuit(text: str) -> Circuit:
    return circuit_from_dict(json.loads(text))
