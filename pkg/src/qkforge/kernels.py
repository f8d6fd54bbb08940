"""Quantum and classical kernel matrices, kernel-target alignment and KTA-driven training."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .circuits import Circuit, bind
from .simulator import NoiseModel, run_density, run_statevector, simulate_batch

SHIFT = np.pi / 2


def embed_states(circuit: Circuit, params, data: np.ndarray, noise: NoiseModel | None = None) -> list[np.ndarray]:
    """One state per data row: statevectors when ``noise`` is None, density matrices otherwise."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[1] != len(circuit.embed_indices):
        raise ValueError(f"circuit embeds {len(circuit.embed_indices)} features, data has {data.shape[1]}")
    states = []
    for row in data:
        bound = bind(circuit, row, params)
        states.append(run_statevector(bound) if noise is None else run_density(bound, noise))
    return states


def gram(states_a: list[np.ndarray], states_b: list[np.ndarray] | None = None) -> np.ndarray:
    """Matrix of Tr(rho_i rho_j) between two state lists."""
    A = np.stack(states_a)
    B = A if states_b is None else np.stack(states_b)
    if A.ndim == 2:
        return np.abs(A.conj() @ B.T) ** 2
    # Tr(rho sigma) = sum_ij rho_ij conj(sigma_ij) for Hermitian sigma
    A = A.reshape(A.shape[0], -1)
    B = B.reshape(B.shape[0], -1)
    return np.real(A @ B.conj().T)


def kernel_matrix(circuit: Circuit, params, data: np.ndarray, other: np.ndarray | None = None,
                  noise: NoiseModel | None = None) -> np.ndarray:
    """Quantum kernel between rows of ``data`` (and ``other`` if given)."""
    states = embed_states(circuit, params, data, noise)
    if other is None:
        K = gram(states)
        return 0.5 * (K + K.T)
    return gram(states, embed_states(circuit, params, other, noise))


def rbf_kernel(data: np.ndarray, gamma: float | None = None, other: np.ndarray | None = None) -> np.ndarray:
    """exp(-gamma ||x_i - x_j||^2); ``gamma`` defaults to 1/num_features."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    other = data if other is None else np.atleast_2d(np.asarray(other, dtype=float))
    if gamma is None:
        gamma = 1.0 / data.shape[1]
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    sq = (data ** 2).sum(1)[:, None] + (other ** 2).sum(1)[None, :] - 2.0 * data @ other.T
    return np.exp(-gamma * np.clip(sq, 0.0, None))


def _num_classes(labels: np.ndarray, num_classes: int | None) -> int:
    c = int(labels.max()) + 1 if num_classes is None else int(num_classes)
    if c < 2:
        raise ValueError("need at least two classes")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in 0..{c - 1}")
    return c


def target_matrix(labels, num_classes: int | None = None) -> np.ndarray:
    """Ideal kernel: 1 for same-class pairs, -1/(c-1) otherwise."""
    labels = np.asarray(labels, dtype=int)
    c = _num_classes(labels, num_classes)
    same = labels[:, None] == labels[None, :]
    return np.where(same, 1.0, -1.0 / (c - 1))


def frobenius_alignment(K1: np.ndarray, K2: np.ndarray) -> float:
    return float(np.sum(K1 * K2) / np.sqrt(np.sum(K1 * K1) * np.sum(K2 * K2)))


def kta(K: np.ndarray, labels, num_classes: int | None = None) -> float:
    """Kernel-target alignment.

    Binary problems use y^T K y / (l sqrt(Tr K^2)) with labels mapped to +-1;
    more classes use the Frobenius alignment with :func:`target_matrix`.
    """
    K = np.asarray(K, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if K.shape != (labels.size, labels.size):
        raise ValueError(f"kernel shape {K.shape} does not match {labels.size} labels")
    norm2 = np.sum(K * K)
    if norm2 == 0:
        raise ValueError("zero kernel matrix has no alignment")
    c = _num_classes(labels, num_classes)
    if c == 2:
        y = np.where(labels == 1, 1.0, -1.0)
        return float(y @ K @ y / (labels.size * np.sqrt(np.trace(K @ K))))
    return frobenius_alignment(K, target_matrix(labels, c))


def kta_gradient_wrt_kernel(K: np.ndarray, labels, num_classes: int | None = None) -> np.ndarray:
    T = target_matrix(labels, num_classes)
    a, b, c = np.sum(K * T), np.sum(K * K), np.sum(T * T)
    return T / np.sqrt(b * c) - a * K / (b ** 1.5 * np.sqrt(c))


# ---------------------------------------------------------------------------
# training


def _overlaps(shifted: np.ndarray, base: np.ndarray) -> np.ndarray:
    return np.abs(shifted @ base.conj().T) ** 2


def kernel_param_gradient(circuit: Circuit, params: np.ndarray, data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Kernel matrix and dK/dtheta_j for every trainable slot via the +-pi/2 shift rule.

    Each angle enters K_ik through both states, so the derivative is the
    symmetrized sum of the two one-sided shift terms.
    """
    params = np.asarray(params, dtype=float)
    base = simulate_batch(circuit, data, params)
    K = _overlaps(base, base)
    grads = np.empty((params.size,) + K.shape)
    for j in range(params.size):
        plus, minus = params.copy(), params.copy()
        plus[j] += SHIFT
        minus[j] -= SHIFT
        d = 0.5 * (_overlaps(simulate_batch(circuit, data, plus), base)
                   - _overlaps(simulate_batch(circuit, data, minus), base))
        grads[j] = d + d.T
    return K, grads


def kta_and_gradient(circuit: Circuit, params, data, labels, num_classes=None) -> tuple[float, np.ndarray]:
    K, dK = kernel_param_gradient(circuit, params, data)
    G = kta_gradient_wrt_kernel(K, labels, num_classes)
    return kta(K, labels, num_classes), np.tensordot(dK, G, axes=([1, 2], [0, 1]))


class Adam:
    """Plain Adam on a numpy vector (ascent when ``maximize``)."""

    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8, maximize=False):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.sign = -1.0 if maximize else 1.0
        self.m = self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.sign * self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def init_params(circuit: Circuit, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 2 * np.pi, circuit.num_trainable)


def train_kernel_params(
    circuit: Circuit,
    data_train: np.ndarray,
    labels_train,
    steps: int = 100,
    lr: float = 0.01,
    seed: int = 0,
    params: np.ndarray | None = None,
    num_classes: int | None = None,
) -> tuple[np.ndarray, list[float]]:
    """Maximize the noiseless training-kernel KTA over the trainable angles with Adam.

    ``history[t]`` is the KTA at the parameters entering step ``t``.
    """
    params = init_params(circuit, seed) if params is None else np.array(params, dtype=float)
    if circuit.num_trainable == 0:
        return params, []
    opt = Adam(lr=lr, maximize=True)
    history = []
    for _ in range(steps):
        value, grad = kta_and_gradient(circuit, params, data_train, labels_train, num_classes)
        history.append(value)
        params = opt.step(params, grad)
    return params, history


def save_kernel_csv(K: np.ndarray, path: str | Path) -> None:
    np.savetxt(path, K, delimiter=",", fmt="%.17g")


def load_kernel_csv(path: str | Path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))
