"""Greedy mRMR (difference form) feature selection with histogram mutual information."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_BINS = 10


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple[int, ...]
    scores: tuple[float, ...]


def quantile_bins(x: np.ndarray, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Integer codes from quantile edges; repeated edges (ties) collapse into one bin."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("column contains non-finite values")
    edges = np.unique(np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1]))
    return np.searchsorted(edges, x, side="right")


def _mi_codes(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = a.max() + 1, b.max() + 1
    joint = np.bincount(a * nb + b, minlength=na * nb).reshape(na, nb) / a.size
    pa = joint.sum(1, keepdims=True)
    pb = joint.sum(0, keepdims=True)
    nz = joint > 0
    return float(max(np.sum(joint[nz] * np.log(joint[nz] / (pa @ pb)[nz])), 0.0))


def _codes(y: np.ndarray) -> np.ndarray:
    return np.unique(np.asarray(y), return_inverse=True)[1]


def mutual_information(x, y, bins: int = DEFAULT_BINS) -> float:
    """MI in nats between a quantile-binned continuous column and discrete labels."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    x = np.asarray(x, dtype=float)
    if np.ptp(x) == 0:
        return 0.0
    return _mi_codes(quantile_bins(x, bins), _codes(y))


def mrmr_select(X: np.ndarray, y, p: int, bins: int = DEFAULT_BINS) -> SelectionResult:
    """Pick ``p`` columns: max relevance first, then relevance minus mean redundancy.

    Ties go to the lowest column index.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if p > d:
        raise ValueError(f"cannot select {p} of {d} features")
    if p <= 0:
        return SelectionResult((), ())
    codes = np.stack([quantile_bins(X[:, j], bins) for j in range(d)], axis=1)
    yc = _codes(y)
    relevance = np.array([_mi_codes(codes[:, j], yc) for j in range(d)])
    selected = [int(np.argmax(relevance))]
    scores = [float(relevance[selected[0]])]
    redundancy = np.zeros(d)
    available = np.ones(d, dtype=bool)
    available[selected[0]] = False
    while len(selected) < p:
        last = codes[:, selected[-1]]
        for j in np.flatnonzero(available):
            redundancy[j] += _mi_codes(codes[:, j], last)
        crit = np.where(available, relevance - redundancy / len(selected), -np.inf)
        best = int(np.argmax(crit))
        selected.append(best)
        scores.append(float(crit[best]))
        available[best] = False
    return SelectionResult(tuple(selected), tuple(scores))
