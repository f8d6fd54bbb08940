"""Dataset ingestion (credit-card CSV, MNIST/FMNIST IDX, synthetic blobs) and angle scaling."""

from __future__ import annotations

import gzip
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

MNIST5_CLASSES = (0, 1, 2, 3, 4)
# T-shirt/top, Trouser, Bag, Ankle boot
FMNIST4_CLASSES = (0, 1, 8, 9)

KINDS = ("cc-csv", "mnist-idx", "fmnist-idx", "synthetic-blobs")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class AngleScaler:
    """Per-feature min-max map of the training range onto [0, pi]."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "AngleScaler":
        X = np.asarray(X, dtype=float)
        return cls(X.min(0), X.max(0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (np.asarray(X, dtype=float) - self.lo) / safe, 0.0) * np.pi


def synthetic_blobs(classes=2, dims=14, n_train=200, n_test=60, seed=0, spread=1.0, separation=3.0):
    """Isotropic Gaussian blobs, balanced per class in both splits."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(classes, dims))
    centers *= separation / np.sqrt(dims)

    def draw(total):
        counts = [total // classes + (c < total % classes) for c in range(classes)]
        X = np.concatenate([centers[c] + spread / np.sqrt(dims) * rng.normal(size=(k, dims)) for c, k in enumerate(counts)])
        y = np.repeat(np.arange(classes), counts)
        perm = rng.permutation(total)
        return X[perm], y[perm]

    Xtr, ytr = draw(n_train)
    Xte, yte = draw(n_test)
    return Xtr, ytr, Xte, yte


def load_credit_card(path, n_samples=1000, min_positive=0.05, test_fraction=0.3, seed=0):
    """Draw ``n_samples`` rows with at least ``min_positive`` fraud rate, then a stratified split.

    Uses the 28 anonymized ``V*`` columns; ``Time`` and ``Amount`` are dropped.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"missing file {path}")
    df = pd.read_csv(path)
    feats = [c for c in df.columns if c.startswith("V")]
    if "Class" not in df.columns or not feats:
        raise DatasetError("expected V1..V28 and Class columns")
    rng = np.random.default_rng(seed)
    pos = np.flatnonzero(df["Class"].to_numpy() == 1)
    neg = np.flatnonzero(df["Class"].to_numpy() == 0)
    n_pos = math.ceil(min_positive * n_samples)
    if len(pos) < n_pos or len(neg) < n_samples - n_pos:
        raise DatasetError(f"need {n_pos} fraudulent and {n_samples - n_pos} normal rows")
    rows = np.concatenate([rng.choice(pos, n_pos, replace=False), rng.choice(neg, n_samples - n_pos, replace=False)])
    X = df.iloc[rows][feats].to_numpy(dtype=float)
    y = df.iloc[rows]["Class"].to_numpy(dtype=int)
    Xtr, Xte, ytr, yte = train_test_split(X, y, test_size=test_fraction, random_state=seed, stratify=y)
    return Xtr, ytr, Xte, yte


def read_idx(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"missing file {path}")
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if raw[0] != 0 or raw[1] != 0 or raw[2] != 0x08:
        raise DatasetError(f"{path}: not an unsigned-byte IDX file")
    ndim = raw[3]
    shape = tuple(int.from_bytes(raw[4 + 4 * k:8 + 4 * k], "big") for k in range(ndim))
    return np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim).reshape(shape)


def write_idx(array: np.ndarray, path) -> None:
    array = np.asarray(array, dtype=np.uint8)
    header = bytes([0, 0, 0x08, array.ndim]) + b"".join(int(s).to_bytes(4, "big") for s in array.shape)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())


def _idx_files(directory: Path, split: str) -> tuple[Path, Path]:
    prefix = "train" if split == "train" else "t10k"
    out = []
    for kind in ("images-idx3-ubyte", "labels-idx1-ubyte"):
        for suffix in ("", ".gz"):
            p = directory / f"{prefix}-{kind}{suffix}"
            if p.exists():
                out.append(p)
                break
        else:
            raise DatasetError(f"missing {prefix}-{kind} in {directory}")
    return out[0], out[1]


def _balanced(images, labels, classes, total, rng):
    per = total // len(classes)
    picks = []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if len(idx) < per:
            raise DatasetError(f"class {c} has {len(idx)} samples, need {per}")
        picks.append(rng.choice(idx, per, replace=False))
    rows = rng.permutation(np.concatenate(picks))
    remap = {c: k for k, c in enumerate(classes)}
    X = images[rows].reshape(len(rows), -1).astype(float) / 255.0
    y = np.array([remap[int(v)] for v in labels[rows]])
    return X, y


def load_image_idx(directory, classes, n_train=2000, n_test=400, seed=0):
    directory = Path(directory)
    rng = np.random.default_rng(seed)
    out = []
    for split, total in (("train", n_train), ("test", n_test)):
        img, lab = _idx_files(directory, split)
        out.extend(_balanced(read_idx(img), read_idx(lab), classes, total, rng))
    return tuple(out)


def load_dataset(spec: dict):
    """Return ``(X_train, y_train, X_test, y_test)`` for a dataset spec dict."""
    kind = spec.get("kind")
    opts = {k: v for k, v in spec.items() if k not in ("kind", "path", "dir", "p")}
    if kind == "synthetic-blobs":
        return synthetic_blobs(**opts)
    if kind == "cc-csv":
        return load_credit_card(spec["path"], **opts)
    if kind == "mnist-idx":
        return load_image_idx(spec["dir"], MNIST5_CLASSES, **opts)
    if kind == "fmnist-idx":
        return load_image_idx(spec["dir"], FMNIST4_CLASSES, **opts)
    raise DatasetError(f"unknown dataset kind {kind!r}; expected one of {KINDS}")


def stratified_subset(y: np.ndarray, per_class: int, seed: int) -> np.ndarray:
    """Row indices with up to ``per_class`` samples of each class, in class order."""
    rng = np.random.default_rng(seed)
    rows = []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        rows.append(np.sort(rng.choice(idx, min(per_class, len(idx)), replace=False)))
    return np.concatenate(rows)
