import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from qkforge.datasets import (
    AngleScaler,
    DatasetError,
    load_dataset,
    read_idx,
    stratified_subset,
    synthetic_blobs,
    write_idx,
)


def test_blobs_balanced_and_seeded():
    a = synthetic_blobs(classes=2, dims=14, n_train=200, n_test=60, seed=4)
    b = synthetic_blobs(classes=2, dims=14, n_train=200, n_test=60, seed=4)
    for u, v in zip(a, b):
        assert np.array_equal(u, v)
    Xtr, ytr, Xte, yte = a
    assert Xtr.shape == (200, 14) and Xte.shape == (60, 14)
    assert np.bincount(ytr).tolist() == [100, 100]
    assert np.bincount(yte).tolist() == [30, 30]
    c = synthetic_blobs(seed=5)
    assert not np.array_equal(c[0], Xtr)


@pytest.fixture
def credit_csv(tmp_path):
    rng = np.random.default_rng(0)
    n = 5000
    df = pd.DataFrame(rng.normal(size=(n, 28)), columns=[f"V{i}" for i in range(1, 29)])
    df.insert(0, "Time", np.arange(n))
    df["Amount"] = rng.uniform(0, 100, n)
    df["Class"] = (rng.uniform(size=n) < 0.02).astype(int)
    path = tmp_path / "creditcard.csv"
    df.to_csv(path, index=False)
    return path


def test_credit_card_draw(credit_csv):
    Xtr, ytr, Xte, yte = load_dataset({"kind": "cc-csv", "path": str(credit_csv)})
    assert Xtr.shape == (700, 28) and Xte.shape == (300, 28)
    y = np.concatenate([ytr, yte])
    assert y.mean() >= 0.05


def test_credit_card_errors(tmp_path, credit_csv):
    with pytest.raises(DatasetError):
        load_dataset({"kind": "cc-csv", "path": str(tmp_path / "missing.csv")})
    with pytest.raises(DatasetError):
        load_dataset({"kind": "cc-csv", "path": str(credit_csv), "n_samples": 4000, "min_positive": 0.5})


def write_fake_mnist(directory, n_per_class=60, classes=range(10), gz=False):
    rng = np.random.default_rng(1)
    suffix = ".gz" if gz else ""
    for prefix in ("train", "t10k"):
        labels = np.repeat(np.array(list(classes), dtype=np.uint8), n_per_class)
        images = rng.integers(0, 256, (labels.size, 28, 28), dtype=np.uint8)
        write_idx(images, directory / f"{prefix}-images-idx3-ubyte{suffix}")
        write_idx(labels, directory / f"{prefix}-labels-idx1-ubyte{suffix}")


@pytest.mark.parametrize("gz", [False, True])
def test_mnist_five(tmp_path, gz):
    write_fake_mnist(tmp_path, n_per_class=500, gz=gz)
    Xtr, ytr, Xte, yte = load_dataset({"kind": "mnist-idx", "dir": str(tmp_path)})
    assert set(np.unique(ytr)) <= {0, 1, 2, 3, 4}
    assert Xte.shape == (400, 784) and Xtr.shape == (2000, 784)
    assert np.bincount(yte).tolist() == [80] * 5
    assert Xtr.min() >= 0 and Xtr.max() <= 1


def test_fmnist_four_remaps_classes(tmp_path):
    write_fake_mnist(tmp_path, n_per_class=120)
    _, ytr, _, yte = load_dataset({"kind": "fmnist-idx", "dir": str(tmp_path), "n_train": 400, "n_test": 80})
    assert set(np.unique(ytr)) == {0, 1, 2, 3}


def test_image_errors(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset({"kind": "mnist-idx", "dir": str(tmp_path)})
    write_fake_mnist(tmp_path, n_per_class=10, classes=range(3))
    with pytest.raises(DatasetError):
        load_dataset({"kind": "mnist-idx", "dir": str(tmp_path), "n_train": 20, "n_test": 10})
    with pytest.raises(DatasetError):
        load_dataset({"kind": "nope"})


def test_idx_roundtrip(tmp_path):
    a = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
    write_idx(a, tmp_path / "a.idx")
    assert np.array_equal(read_idx(tmp_path / "a.idx"), a)
    (tmp_path / "bad.idx").write_bytes(b"\x01\x02\x03\x04")
    with pytest.raises(DatasetError):
        read_idx(tmp_path / "bad.idx")


@given(hnp.arrays(float, (12, 4), elements=st.floats(-1e3, 1e3)))
def test_angle_scaler_range(X):
    Z = AngleScaler.fit(X).transform(X)
    assert Z.min() >= 0 and Z.max() <= np.pi + 1e-12
    const = np.ptp(X, axis=0) == 0
    assert np.all(Z[:, const] == 0)


def test_stratified_subset():
    y = np.array([0] * 30 + [1] * 5 + [2] * 20)
    rows = stratified_subset(y, 10, seed=0)
    assert np.bincount(y[rows]).tolist() == [10, 5, 10]
    assert len(set(rows.tolist())) == rows.size
    assert np.array_equal(rows, stratified_subset(y, 10, seed=0))
