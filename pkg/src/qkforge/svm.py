"""One-vs-rest C-SVM on a precomputed kernel, trained with SMO.

Working-set selection follows the second-order rule of Fan, Chen and Lin
(JMLR 2005), as in LIBSVM.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

TAU = 1e-12


@dataclass
class BinarySvm:
    alpha: np.ndarray
    y: np.ndarray
    rho: float
    iterations: int

    def decision(self, K_rows: np.ndarray) -> np.ndarray:
        return K_rows @ (self.alpha * self.y) - self.rho


@dataclass
class SvmModel:
    classes: np.ndarray
    machines: list[BinarySvm]
    C: float

    @property
    def dual_coef(self) -> np.ndarray:
        return np.stack([m.alpha * m.y for m in self.machines])

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.dual_coef != 0, axis=0))

    def decision_function(self, K_test_train: np.ndarray) -> np.ndarray:
        K_test_train = np.atleast_2d(K_test_train)
        return np.stack([m.decision(K_test_train) for m in self.machines], axis=1)

    def predict(self, K_test_train: np.ndarray) -> np.ndarray:
        # argmax keeps the first maximum, i.e. the lowest class id on ties
        return self.classes[np.argmax(self.decision_function(K_test_train), axis=1)]


def smo(K: np.ndarray, y: np.ndarray, C: float = 1.0, tol: float = 1e-3, max_iter: int | None = None) -> BinarySvm:
    """Solve the binary dual for labels ``y`` in {-1, +1}."""
    y = np.asarray(y, dtype=float)
    l = y.size
    if np.all(y == y[0]):
        return BinarySvm(np.zeros(l), y, -float(y[0]), 0)
    Q = (y[:, None] * y[None, :]) * K
    QD = np.diag(K).astype(float)
    alpha = np.zeros(l)
    G = -np.ones(l)
    max_iter = max_iter or max(10_000_000, 100 * l)
    it = 0
    while it < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * G
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        gmax = score[i]
        if gmax - score[low].min() < tol:
            break
        cand = low & (score < gmax)
        b = gmax - score[cand]
        a = QD[i] + QD[cand] - 2.0 * y[i] * y[cand] * Q[i, cand]
        a = np.where(a > 0, a, TAU)
        j = int(np.flatnonzero(cand)[np.argmin(-(b * b) / a)])

        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(QD[i] + QD[j] + 2.0 * Q[i, j], TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = max(QD[i] + QD[j] - 2.0 * Q[i, j], TAU)
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        G += Q[:, i] * (ni - ai) + Q[:, j] * (nj - aj)
        alpha[i], alpha[j] = ni, nj
        it += 1
    return BinarySvm(alpha, y, _rho(alpha, y, G, C), it)


def _rho(alpha, y, G, C) -> float:
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yG[free].mean())
    at_upper = alpha >= C
    ub_mask = ((y > 0) & ~at_upper) | ((y < 0) & at_upper)
    lb_mask = ((y > 0) & at_upper) | ((y < 0) & ~at_upper)
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)


def clip_to_psd(K: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Symmetrize and, if an eigenvalue is below ``-tol``, zero the negative part with a warning."""
    K = 0.5 * (K + K.T)
    w, V = np.linalg.eigh(K)
    if w.min() < -tol:
        warnings.warn(f"kernel is not PSD (min eigenvalue {w.min():.3g}); clipping", RuntimeWarning)
        K = (V * np.clip(w, 0, None)) @ V.T
    return K


def svm_fit(K: np.ndarray, labels, C: float = 1.0, tol: float = 1e-3) -> SvmModel:
    labels = np.asarray(labels)
    K = np.asarray(K, dtype=float)
    if K.shape != (labels.size, labels.size):
        raise ValueError(f"kernel shape {K.shape} does not match {labels.size} labels")
    if labels.size < 2:
        raise ValueError("need at least two training samples")
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("need at least two classes")
    K = clip_to_psd(K)
    machines = [smo(K, np.where(labels == c, 1.0, -1.0), C, tol) for c in classes]
    return SvmModel(classes, machines, C)


def svm_accuracy(model: SvmModel, K_test_train: np.ndarray, labels_test) -> float:
    labels_test = np.asarray(labels_test)
    K_test_train = np.asarray(K_test_train, dtype=float)
    if labels_test.size == 0:
        raise ValueError("empty test set")
    n_train = model.machines[0].alpha.size
    if K_test_train.ndim != 2 or K_test_train.shape != (labels_test.size, n_train):
        raise ValueError(f"expected kernel of shape ({labels_test.size}, {n_train}), got {K_test_train.shape}")
    return float(np.mean(model.predict(K_test_train) == labels_test))
