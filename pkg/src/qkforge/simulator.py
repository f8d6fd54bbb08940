"""Statevector and density-matrix simulation with calibration-derived noise.

Qubit 0 is the most significant bit of a basis index. Density matrices are
evolved gate by gate: unitary conjugation, then a depolarizing channel on the
gate's qubits, then thermal relaxation for the gate's duration. The three maps
are composed into one superoperator before touching the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuits import BoundCircuit, Circuit, compose, inverse
from .device import DeviceTopology, Subgraph

MAX_STATEVECTOR_QUBITS = 12
MAX_DENSITY_QUBITS = 8

DEFAULT_1Q_DURATION_NS = 35.0
DEFAULT_2Q_DURATION_NS = 300.0

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)
PAULIS = (I2, X, Y, Z)


class SimulationLimitError(ValueError):
    """Raised when a circuit is too wide for the requested simulation method."""


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def rz(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]])


def gate_matrix(kind: str, angle: float | None = None) -> np.ndarray:
    if kind == "rx":
        return rx(angle)
    if kind == "rz":
        return rz(angle)
    if kind == "x":
        return X
    if kind == "id":
        return I2
    if kind == "cx":
        return CNOT
    if kind == "cz":
        return CZ
    raise ValueError(f"no matrix for gate {kind!r}")


# ---------------------------------------------------------------------------
# channels


def depolarizing_kraus(p: float, num_qubits: int = 1) -> list[np.ndarray]:
    """Kraus operators of rho -> (1-p) rho + p I/d."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability {p} outside [0,1]")
    paulis = list(PAULIS)
    for _ in range(num_qubits - 1):
        paulis = [np.kron(a, b) for a in paulis for b in PAULIS]
    d2 = len(paulis)
    weights = [1.0 - p * (d2 - 1) / d2] + [p / d2] * (d2 - 1)
    return [np.sqrt(w) * P for w, P in zip(weights, paulis)]


def thermal_relaxation_kraus(duration: float, t1: float, t2: float) -> list[np.ndarray]:
    """Amplitude damping (T1) followed by pure dephasing so coherences decay as exp(-t/T2).

    ``duration``, ``t1`` and ``t2`` share a time unit. T2 is capped at 2*T1.
    """
    if duration < 0 or t1 <= 0 or t2 <= 0:
        raise ValueError("relaxation needs duration >= 0 and positive T1/T2")
    t2 = min(t2, 2.0 * t1)
    gamma = 1.0 - np.exp(-duration / t1)
    inv_tphi = 1.0 / t2 - 0.5 / t1
    lam = 1.0 - np.exp(-2.0 * duration * inv_tphi) if inv_tphi > 0 else 0.0
    amp = [np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex), np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)]
    phase = [np.array([[1, 0], [0, np.sqrt(1 - lam)]], dtype=complex), np.array([[0, 0], [0, np.sqrt(lam)]], dtype=complex)]
    return [P @ A for A in amp for P in phase]


def kraus_to_superop(kraus: list[np.ndarray]) -> np.ndarray:
    """Superoperator acting on row-major vec(rho)."""
    return sum(np.kron(K, K.conj()) for K in kraus)


def unitary_superop(U: np.ndarray) -> np.ndarray:
    return np.kron(U, U.conj())


def is_trace_preserving(kraus: list[np.ndarray], atol: float = 1e-10) -> bool:
    d = kraus[0].shape[0]
    return np.allclose(sum(K.conj().T @ K for K in kraus), np.eye(d), atol=atol)


@dataclass
class NoiseModel:
    """Per-local-qubit and per-pair noise parameters. Times in nanoseconds.

    ``gate_errors[q][kind]`` feeds the depolarizing channel of 1-qubit gates,
    ``pair_errors[(a, b)]`` that of 2-qubit gates. Pairs without calibration
    fall back to ``fallback_pair_error``.
    """

    n: int
    t1_ns: np.ndarray
    t2_ns: np.ndarray
    readout: np.ndarray
    gate_errors: list[dict[str, float]]
    pair_errors: dict[tuple[int, int], float] = field(default_factory=dict)
    pair_durations: dict[tuple[int, int], float] = field(default_factory=dict)
    fallback_pair_error: float = 0.0
    duration_1q: float = DEFAULT_1Q_DURATION_NS
    duration_2q: float = DEFAULT_2Q_DURATION_NS
    depolarizing: bool = True
    relaxation: bool = True
    readout_noise: bool = True
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("t1_ns", "t2_ns", "readout"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any((self.readout < 0) | (self.readout > 1)):
            raise ValueError("readout error outside [0,1]")
        errs = [e for g in self.gate_errors for e in g.values()] + list(self.pair_errors.values())
        if any(not 0.0 <= e <= 1.0 for e in errs + [self.fallback_pair_error]):
            raise ValueError("gate error outside [0,1]")

    @classmethod
    def from_calibration(cls, topo: DeviceTopology, sub: Subgraph, **overrides) -> "NoiseModel":
        qs = [topo.qubit(q) for q in sub.qubit_ids]
        pos = {q: i for i, q in enumerate(sub.qubit_ids)}
        pair_errors, pair_durations = {}, {}
        for a in sub.qubit_ids:
            for b in sub.qubit_ids:
                c = topo.coupling(a, b) if a < b else None
                if c is not None:
                    key = (pos[a], pos[b])
                    pair_errors[key] = c.two_qubit_gate_error
                    pair_durations[key] = c.gate_duration
        fallback = max(pair_errors.values(), default=max((c.two_qubit_gate_error for c in topo.couplings), default=0.0))
        return cls(
            n=sub.n,
            t1_ns=[q.t1 * 1e3 for q in qs],
            t2_ns=[q.t2 * 1e3 for q in qs],
            readout=[q.readout_error for q in qs],
            gate_errors=[dict(q.gate_errors) for q in qs],
            pair_errors=pair_errors,
            pair_durations=pair_durations,
            fallback_pair_error=fallback,
            **overrides,
        )

    @classmethod
    def noiseless(cls, n: int) -> "NoiseModel":
        return cls(n, np.ones(n), np.ones(n), np.zeros(n), [{} for _ in range(n)],
                   depolarizing=False, relaxation=False, readout_noise=False)

    @classmethod
    def uniform(cls, n: int, p1: float = 0.0, p2: float = 0.0, readout: float = 0.0,
                t1_ns: float = 1e12, t2_ns: float = 1e12, **flags) -> "NoiseModel":
        gates = [{"rx": p1, "rz": p1, "x": p1, "id": p1} for _ in range(n)]
        return cls(n, np.full(n, t1_ns), np.full(n, t2_ns), np.full(n, readout), gates,
                   fallback_pair_error=p2, **flags)

    def _pair(self, a: int, b: int) -> tuple[float, float]:
        key = (min(a, b), max(a, b))
        return (self.pair_errors.get(key, self.fallback_pair_error),
                self.pair_durations.get(key, self.duration_2q))

    def channel_superop(self, kind: str, qubits: tuple[int, ...]) -> np.ndarray | None:
        """Depolarizing then relaxation for one gate, as a superoperator (None when noiseless)."""
        key = (kind, qubits)
        if key in self._cache:
            return self._cache[key]
        k = len(qubits)
        if k == 1:
            q = qubits[0]
            p = self.gate_errors[q].get(kind, 0.0)
            duration = self.duration_1q
        else:
            p, duration = self._pair(*qubits)
        ops = None
        if self.depolarizing and p > 0:
            ops = kraus_to_superop(depolarizing_kraus(p, k))
        if self.relaxation and duration > 0:
            relax = [np.ones((1, 1), dtype=complex)]
            for q in qubits:
                relax = [np.kron(A, B) for A in relax
                         for B in thermal_relaxation_kraus(duration, self.t1_ns[q], self.t2_ns[q])]
            r = kraus_to_superop(relax)
            ops = r if ops is None else r @ ops
        self._cache[key] = ops
        return ops

    def confusion(self, q: int) -> np.ndarray:
        e = self.readout[q] if self.readout_noise else 0.0
        return np.array([[1 - e, e], [e, 1 - e]])


# ---------------------------------------------------------------------------
# statevector


def _apply_1q(psi: np.ndarray, U: np.ndarray, q: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(U, psi, axes=([1], [q])), 0, q)


def _apply_2q(psi: np.ndarray, U: np.ndarray, a: int, b: int) -> np.ndarray:
    out = np.tensordot(U.reshape(2, 2, 2, 2), psi, axes=([2, 3], [a, b]))
    return np.moveaxis(out, [0, 1], [a, b])


def run_statevector(bound: BoundCircuit, max_qubits: int = MAX_STATEVECTOR_QUBITS) -> np.ndarray:
    """Final state of ``bound`` applied to |0...0>, as a flat amplitude vector."""
    n = bound.n
    if n > max_qubits:
        raise SimulationLimitError(f"{n} qubits exceeds statevector limit {max_qubits}")
    psi = np.zeros((2,) * n, dtype=complex)
    psi[(0,) * n] = 1.0
    for op in bound.ops:
        if op.kind == "id":
            continue
        U = gate_matrix(op.kind, op.angle)
        psi = _apply_1q(psi, U, op.qubits[0]) if len(op.qubits) == 1 else _apply_2q(psi, U, *op.qubits)
    return psi.reshape(-1)


def simulate_batch(
    circuit: Circuit, data: np.ndarray, params: np.ndarray, max_qubits: int = MAX_STATEVECTOR_QUBITS
) -> np.ndarray:
    """Statevectors for every row of ``data`` in one pass. Returns shape (rows, 2**n)."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    params = np.asarray(params, dtype=float).ravel()
    n, batch = circuit.n, data.shape[0]
    if n > max_qubits:
        raise SimulationLimitError(f"{n} qubits exceeds statevector limit {max_qubits}")
    if data.shape[1] != len(circuit.embed_indices) or params.size != circuit.num_trainable:
        raise ValueError("data/params do not match the circuit's slots")
    psi = np.zeros((batch,) + (2,) * n, dtype=complex)
    psi[(slice(None),) + (0,) * n] = 1.0
    for op in circuit.ops:
        if op.kind == "id":
            continue
        if op.two_qubit:
            a, b = op.qubits[0] + 1, op.qubits[1] + 1
            idx = [slice(None)] * (n + 1)
            idx[a] = 1
            if op.kind == "cz":
                idx[b] = 1
                psi[tuple(idx)] *= -1
            else:
                i0, i1 = list(idx), list(idx)
                i0[b], i1[b] = 0, 1
                psi[tuple(i0)], psi[tuple(i1)] = psi[tuple(i1)].copy(), psi[tuple(i0)].copy()
            continue
        q = op.qubits[0] + 1
        if op.kind == "x":
            psi = np.flip(psi, axis=q)
            continue
        theta = data[:, op.index] if op.slot == "embedding" else np.full(batch, params[op.index])
        moved = np.moveaxis(psi, q, -1)
        if op.kind == "rz":
            phase = np.stack([np.exp(-0.5j * theta), np.exp(0.5j * theta)], axis=-1)
            moved = moved * phase.reshape((batch,) + (1,) * (n - 1) + (2,))
        else:
            c, s = np.cos(theta / 2), -1j * np.sin(theta / 2)
            c = c.reshape((batch,) + (1,) * (n - 1))
            s = s.reshape((batch,) + (1,) * (n - 1))
            m0, m1 = moved[..., 0], moved[..., 1]
            moved = np.stack([c * m0 + s * m1, s * m0 + c * m1], axis=-1)
        psi = np.moveaxis(moved, -1, q)
    return np.ascontiguousarray(psi.reshape(batch, -1))


# ---------------------------------------------------------------------------
# density matrix


def _apply_superop(rho: np.ndarray, S: np.ndarray, qubits: tuple[int, ...], n: int) -> np.ndarray:
    k = len(qubits)
    axes = list(qubits) + [n + q for q in qubits]
    out = np.tensordot(S.reshape((2,) * (4 * k)), rho, axes=(list(range(2 * k, 4 * k)), axes))
    return np.moveaxis(out, list(range(2 * k)), axes)


def run_density(
    bound: BoundCircuit, noise: NoiseModel, max_qubits: int = MAX_DENSITY_QUBITS
) -> np.ndarray:
    """Noisy evolution of |0...0><0...0|. Returns a (2**n, 2**n) matrix."""
    n = bound.n
    if n > max_qubits:
        raise SimulationLimitError(f"{n} qubits exceeds density limit {max_qubits}")
    if noise.n < n:
        raise ValueError(f"noise model covers {noise.n} qubits, circuit needs {n}")
    rho = np.zeros((2,) * (2 * n), dtype=complex)
    rho[(0,) * (2 * n)] = 1.0
    for op in bound.ops:
        S = noise.channel_superop(op.kind, op.qubits)
        if op.kind != "id":
            U = unitary_superop(gate_matrix(op.kind, op.angle))
            S = U if S is None else S @ U
        if S is not None:
            rho = _apply_superop(rho, S, op.qubits, n)
    d = 2 ** n
    return rho.reshape(d, d)


def measure_distribution(rho: np.ndarray, noise: NoiseModel) -> np.ndarray:
    """Outcome probabilities after per-qubit symmetric readout confusion."""
    d = rho.shape[0]
    n = d.bit_length() - 1
    probs = np.clip(np.real(np.diag(rho)), 0.0, None).reshape((2,) * n)
    for q in range(n):
        probs = np.moveaxis(np.tensordot(noise.confusion(q).T, probs, axes=([1], [q])), 0, q)
    return probs.reshape(-1)


def pst(bound: BoundCircuit, noise: NoiseModel, shots: int | None = None,
        rng: np.random.Generator | None = None) -> float:
    """Probability that circuit-then-inverse returns |0...0> under ``noise``.

    Exact by default; with ``shots`` the value is a sampled frequency.
    """
    mirrored = compose(bound, inverse(bound))
    dist = measure_distribution(run_density(mirrored, noise), noise)
    if shots is None:
        return float(dist[0])
    rng = rng or np.random.default_rng()
    dist = dist / dist.sum()
    return float(rng.multinomial(shots, dist)[0] / shots)


def kernel_entry(a: np.ndarray, b: np.ndarray) -> float:
    """Tr(rho_a rho_b); 1-D inputs are treated as pure statevectors."""
    if a.shape[0] != b.shape[0]:
        raise ValueError("state dimensions differ")
    if a.ndim == 1 and b.ndim == 1:
        return float(abs(np.vdot(a, b)) ** 2)
    if a.ndim == 1:
        return float(np.real(np.vdot(a, b @ a)))
    if b.ndim == 1:
        return float(np.real(np.vdot(b, a @ b)))
    return float(np.real(np.sum(a * b.T)))
