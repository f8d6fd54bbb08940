"""Wall-clock comparison of surrogate prediction against direct label computation.

Both sides are timed over the same circuits. Direct PST runs the noisy
density simulation of circuit-then-inverse; direct KTA builds the noiseless
kernel on a stratified subset and aligns it with the labels. Prediction time
is the batched forward pass of each surrogate over featurized, normalized
graphs; featurization is timed separately and reported alongside. Every
figure is the best of ``repeats`` passes.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np
import torch

from .circuits import default_gate_budget
from .datasets import stratified_subset
from .device import DeviceTopology, default_exclusion, select_subgraph
from .features import FIDELITY, PERFORMANCE, build_graph, fit_normalizer
from .gnn import SurrogateModel, predict_batch
from .pipeline import PreparedData, _kta_label, _pst_label, generate_pool
from .simulator import NoiseModel


@dataclass
class SpeedupResult:
    n_qubits: int
    circuits: int
    pst_direct_s: float  # mean per circuit
    kta_direct_s: float
    pst_predict_s: float
    kta_predict_s: float
    featurize_s: float

    @property
    def pst_speedup(self) -> float:
        return self.pst_direct_s / self.pst_predict_s

    @property
    def kta_speedup(self) -> float:
        return self.kta_direct_s / self.kta_predict_s

    def to_dict(self) -> dict:
        return {**asdict(self), "pst_speedup": self.pst_speedup, "kta_speedup": self.kta_speedup}


def _per_item(fn, count: int, repeats: int) -> float:
    """Best-of-``repeats`` wall-clock of ``fn()``, divided by ``count``."""
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best / count


def measure_speedup(
    topo: DeviceTopology,
    data: PreparedData,
    n_qubits: int = 7,
    circuits: int = 100,
    per_class: int = 10,
    seed: int = 0,
    repeats: int = 3,
    models: tuple[SurrogateModel, SurrogateModel] | None = None,
) -> SpeedupResult:
    """Mean per-circuit cost of direct labels vs surrogate predictions on ``circuits`` pool circuits.

    Inference cost does not depend on the weights, so freshly seeded models
    stand in when ``models`` is omitted.
    """
    p = data.X_train.shape[1]
    sub = select_subgraph(topo, n_qubits, default_exclusion(topo.num_qubits))
    pool = generate_pool(sub, topo.gate_set, circuits, default_gate_budget(p, topo.gate_set), p, seed)
    noise = NoiseModel.from_calibration(topo, sub)
    rows = stratified_subset(data.y_train, per_class, seed)
    X, y = data.X_train[rows], data.y_train[rows]
    ids = range(len(pool))

    pst_direct = _per_item(lambda: [_pst_label((pool[i], noise, seed, i, p)) for i in ids], len(pool), repeats)
    kta_direct = _per_item(lambda: [_kta_label((pool[i], X, y, data.num_classes, "zero", seed, i)) for i in ids],
                           len(pool), repeats)

    models = models or (SurrogateModel(seed=seed), SurrogateModel(seed=seed + 1))
    featurize = 0.0
    predict = []
    threads = torch.get_num_threads()
    torch.set_num_threads(1)  # single-core comparison, like the direct side
    try:
        for model, mode in zip(models, (FIDELITY, PERFORMANCE)):
            start = time.perf_counter()
            raw = [build_graph(c, topo, mode, model.q_width) for c in pool]
            featurize += (time.perf_counter() - start) / len(pool)
            norm = fit_normalizer(raw)
            graphs = [norm.apply(g) for g in raw]
            predict_batch(model, graphs)  # warm-up
            predict.append(_per_item(lambda: predict_batch(model, graphs), len(pool), repeats))
    finally:
        torch.set_num_threads(threads)
    return SpeedupResult(n_qubits, len(pool), pst_direct, kta_direct, predict[0], predict[1], featurize / 2)
