"""End-to-end kernel search: subgraph -> pool -> labels -> surrogates -> ranking -> final training.

Every stage writes a JSON checkpoint into the run directory (temp file then
``os.replace``), and a rerun with the same config loads finished stages
instead of recomputing them. Wall-clock timings go to ``timings.json`` so
that ``report.json`` stays a pure function of the config and the data.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import fixtures
from .circuits import (
    Circuit,
    assign_embedding,
    bind,
    circuit_from_dict,
    circuit_to_dict,
    default_gate_budget,
    generate_candidate,
    tek_circuit,
)
from .datasets import AngleScaler, load_dataset, stratified_subset
from .device import (
    DeviceTopology,
    default_exclusion,
    load_topology,
    select_subgraph,
    subgraph_from_dict,
    subgraph_to_dict,
)
from .features import FIDELITY, PERFORMANCE, CircuitGraph, Normalizer, build_graph, fit_normalizer
from .gnn import SurrogateModel, TrainConfig, model_from_dict, model_to_dict, predict_batch, r_squared, train
from .kernels import kernel_matrix, kta, rbf_kernel, train_kernel_params
from .mrmr import mrmr_select
from .simulator import NoiseModel, pst
from .svm import svm_accuracy, svm_fit

FIXTURES: dict[str, Callable[[], DeviceTopology]] = {
    "torino_like": fixtures.torino_like,
    "perth_like": fixtures.seven_qubit_h,
}
KTA_ANGLES = ("zero", "seeded")
BASELINES = ("random", "tek", "rbfk")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    calibration: str = "fixture:torino_like"
    n_qubits: int = 4
    exclude: int | None = None  # per noise type; None -> ceil(10% of device qubits)
    pool_size: int = 2000
    gates: int | None = None  # None -> default_gate_budget(p, gate_set)
    label_sample: int = 800
    gnn_test_fraction: float = 0.2
    pst_keep: float = 0.2
    top_k: int = 10
    kta_per_class: int = 10
    kta_angles: str = "zero"
    train_steps: int = 100
    train_lr: float = 0.01
    gnn_epochs: int = 200
    gnn_batch: int = 512
    gnn_lr: float = 0.01
    seed: int = 0
    dataset: dict = field(default_factory=lambda: {"kind": "synthetic-blobs", "classes": 2, "dims": 14,
                                                     "n_train": 200, "n_test": 60, "seed": 0})
    p: int = 14
    q_width: int = 16
    svm_C: float = 1.0
    eval_noise: bool = True
    baselines: tuple[str, ...] = BASELINES
    random_kernels: int = 25
    workers: int = 1

    def __post_init__(self):
        self.baselines = tuple(self.baselines)
        if self.n_qubits < 1 or self.pool_size < 1 or self.p < 1:
            raise ValueError("n_qubits, pool_size and p must be positive")
        if not 2 <= self.label_sample <= self.pool_size:
            raise ValueError("label_sample must lie in [2, pool_size]")
        if not 0 < self.pst_keep <= 1:
            raise ValueError("pst_keep must lie in (0, 1]")
        if not 0 < self.gnn_test_fraction < 1:
            raise ValueError("gnn_test_fraction must lie in (0, 1)")
        if self.top_k < 1 or self.top_k > self.survivors:
            raise ValueError(f"top_k={self.top_k} must lie in [1, {self.survivors}] (PST survivors)")
        if self.kta_angles not in KTA_ANGLES:
            raise ValueError(f"kta_angles must be one of {KTA_ANGLES}")
        unknown = set(self.baselines) - set(BASELINES)
        if unknown:
            raise ValueError(f"unknown baselines {sorted(unknown)}")

    @property
    def survivors(self) -> int:
        return math.ceil(self.pst_keep * self.pool_size)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["baselines"] = list(self.baselines)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**doc)

    def digest(self) -> str:
        """Hash of every field that can change results (``workers`` cannot)."""
        doc = {k: v for k, v in self.to_dict().items() if k != "workers"}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunReport:
    config: dict
    subgraph: list[int]
    gates: int
    selected_features: list[int]
    gnn_r2: dict[str, float]
    candidates: list[dict]  # per pool circuit: id, pred_pst, pred_kta
    topk: list[dict]  # id, pred_pst, pred_kta, final_kta, test_accuracy
    chosen_id: int
    chosen_accuracy: float
    baselines: dict[str, float]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunReport":
        return cls(**doc)


# ---------------------------------------------------------------------------
# checkpoint helpers


def write_json(path: Path, doc) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc))
    os.replace(tmp, path)


def read_json(path: Path):
    return json.loads(Path(path).read_text())


def load_calibration(ref: str) -> DeviceTopology:
    if ref.startswith("fixture:"):
        name = ref.split(":", 1)[1]
        if name not in FIXTURES:
            raise ValueError(f"unknown fixture {name!r}; expected one of {sorted(FIXTURES)}")
        return FIXTURES[name]()
    return load_topology(ref)


def circuit_rng(seed: int, cid: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([seed, cid, *tags])


# ---------------------------------------------------------------------------
# stage functions (usable on their own)


@dataclass(frozen=True)
class PreparedData:
    X_train: np.ndarray  # angles in [0, pi] on the training range
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    selected: tuple[int, ...]

    @property
    def num_classes(self) -> int:
        return int(max(self.y_train.max(), self.y_test.max())) + 1


def prepare_data(spec: dict, p: int) -> PreparedData:
    """Load, reduce to ``p`` mRMR columns chosen on the training split, scale to angles."""
    Xtr, ytr, Xte, yte = load_dataset(spec)
    if p > Xtr.shape[1]:
        raise ValueError(f"dataset has {Xtr.shape[1]} features, p={p}")
    sel = mrmr_select(Xtr, ytr, p).selected
    Xtr, Xte = Xtr[:, sel], Xte[:, sel]
    scaler = AngleScaler.fit(Xtr)
    return PreparedData(scaler.transform(Xtr), np.asarray(ytr, dtype=int), scaler.transform(Xte),
                        np.asarray(yte, dtype=int), tuple(sel))


def generate_pool(sub, gate_set, size: int, gates: int, p: int, seed: int) -> list[Circuit]:
    """Reject-and-resample until every circuit has >= p parameterized gates (<= 10x attempts)."""
    pool, attempts = [], 0
    for cid in range(size):
        for attempt in range(10 * size):
            rng = circuit_rng(seed, cid, attempt)
            attempts += 1
            if attempts > 10 * size:
                raise RuntimeError(f"pool generation exceeded {10 * size} attempts at circuit {cid}")
            c = generate_candidate(sub, gate_set, gates, rng)
            if c.num_parameterized >= p:
                pool.append(assign_embedding(c, p, rng))
                break
    return pool


def _pst_label(args):
    circuit, noise, seed, cid, p = args
    r = circuit_rng(seed, cid, 1)
    x = r.uniform(0.0, np.pi, p)
    theta = r.uniform(0.0, 2 * np.pi, circuit.num_trainable)
    return pst(bind(circuit, x, theta), noise)


def _kta_label(args):
    circuit, data, labels, num_classes, angles, seed, cid = args
    if angles == "zero":
        theta = np.zeros(circuit.num_trainable)
    else:
        r = circuit_rng(seed, cid, 1)
        r.uniform(0.0, np.pi, len(circuit.embed_indices))  # same draws as the PST label
        theta = r.uniform(0.0, 2 * np.pi, circuit.num_trainable)
    return kta(kernel_matrix(circuit, theta, data), labels, num_classes)


def _map(fn, items, workers: int) -> list:
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=8))


def label_pool(
    pool: Sequence[Circuit],
    ids: Sequence[int],
    noise: NoiseModel,
    data_subset: np.ndarray,
    labels_subset: np.ndarray,
    seed: int = 0,
    num_classes: int | None = None,
    kta_angles: str = "zero",
    workers: int = 1,
) -> tuple[list[float], list[float]]:
    """PST under ``noise`` with angles seeded by circuit id, and noiseless KTA on the labeled subset.

    KTA uses all-zero trainable angles by default, so the label depends on the
    circuit structure and its embedding placement only; ``"seeded"`` instead
    uses per-circuit random angles.
    """
    p = len(pool[ids[0]].embed_indices) if len(ids) else 0
    pst_l = _map(_pst_label, [(pool[i], noise, seed, i, p) for i in ids], workers)
    kta_l = _map(_kta_label, [(pool[i], data_subset, labels_subset, num_classes, kta_angles, seed, i) for i in ids],
                 workers)
    return [float(v) for v in pst_l], [float(v) for v in kta_l]


def rank_and_filter(pred_pst: Sequence[float], pred_kta: Sequence[float], keep_fraction: float, top_k: int) -> list[int]:
    """Keep the best ``keep_fraction`` by predicted PST, then the ``top_k`` of those by predicted KTA.

    Ties go to the lower circuit id at both steps.
    """
    pred_pst = np.asarray(pred_pst, dtype=float)
    pred_kta = np.asarray(pred_kta, dtype=float)
    if pred_pst.shape != pred_kta.shape:
        raise ValueError("prediction lists cover different pools")
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must lie in (0, 1]")
    m = pred_pst.size
    keep = math.ceil(keep_fraction * m)
    if top_k > keep:
        raise ValueError(f"top_k={top_k} exceeds the {keep} PST survivors")
    ids = np.arange(m)
    survivors = ids[np.lexsort((ids, -pred_pst))][:keep]
    order = np.lexsort((survivors, -pred_kta[survivors]))
    return [int(i) for i in survivors[order][:top_k]]


def _final_eval(args):
    circuit, data, seed, cid, steps, lr, C, noise = args
    params, history = train_kernel_params(circuit, data.X_train, data.y_train, steps=steps, lr=lr,
                                          seed=int(circuit_rng(seed, cid, 2).integers(2**32)),
                                          num_classes=data.num_classes)
    K_tr = kernel_matrix(circuit, params, data.X_train, noise=noise)
    K_te = kernel_matrix(circuit, params, data.X_test, data.X_train, noise=noise)
    model = svm_fit(K_tr, data.y_train, C)
    final = kta(kernel_matrix(circuit, params, data.X_train), data.y_train, data.num_classes)
    return {"final_kta": float(final), "test_accuracy": svm_accuracy(model, K_te, data.y_test),
            "params": [float(v) for v in params]}


def evaluate_circuits(circuits, ids, data: PreparedData, cfg: PipelineConfig, noise: NoiseModel | None) -> list[dict]:
    """Train each circuit's angles on KTA from a seeded uniform start, then score an SVM on the test split."""
    jobs = [(c, data, cfg.seed, cid, cfg.train_steps, cfg.train_lr, cfg.svm_C, noise) for c, cid in zip(circuits, ids)]
    return _map(_final_eval, jobs, cfg.workers)


def run_baselines(cfg: PipelineConfig, data: PreparedData, pool: Sequence[Circuit], sub, gate_set,
                  noise: NoiseModel | None, which: Sequence[str] | None = None) -> dict[str, float]:
    which = cfg.baselines if which is None else tuple(which)
    out: dict[str, float] = {}
    if "random" in which:
        rng = np.random.default_rng([cfg.seed, 7])
        ids = sorted(rng.choice(len(pool), size=min(cfg.random_kernels, len(pool)), replace=False).tolist())
        res = evaluate_circuits([pool[i] for i in ids], ids, data, cfg, noise)
        accs = [r["test_accuracy"] for r in res]
        out["random"] = float(np.mean(accs))
        out["random_std"] = float(np.std(accs))
    if "tek" in which:
        tek = tek_circuit(sub, gate_set, cfg.p)
        # seeded as if it were one more pool circuit
        out["tek"] = evaluate_circuits([tek], [len(pool)], data, cfg, noise)[0]["test_accuracy"]
    if "rbfk" in which:
        model = svm_fit(rbf_kernel(data.X_train), data.y_train, cfg.svm_C)
        out["rbfk"] = svm_accuracy(model, rbf_kernel(data.X_test, other=data.X_train), data.y_test)
    return out


def graphs_for(pool, topo, mode, q_width) -> list[CircuitGraph]:
    return [build_graph(c, topo, mode, q_width) for c in pool]


def fit_surrogate(graphs, targets, cfg: PipelineConfig, seed_tag: int):
    """Train on the first ``1 - gnn_test_fraction`` of a seeded split; R^2 on the rest."""
    n = len(graphs)
    perm = np.random.default_rng([cfg.seed, seed_tag]).permutation(n)
    n_test = max(2, int(round(cfg.gnn_test_fraction * n)))
    test, tr = perm[:n_test], perm[n_test:]
    model = SurrogateModel(cfg.q_width, seed=cfg.seed + seed_tag)
    tcfg = TrainConfig(lr=cfg.gnn_lr, batch_size=cfg.gnn_batch, epochs=cfg.gnn_epochs, seed=cfg.seed + seed_tag)
    y = np.asarray(targets, dtype=float)
    model, history = train(model, [graphs[i] for i in tr], y[tr], tcfg)
    preds = predict_batch(model, [graphs[i] for i in test])
    try:
        r2 = r_squared(preds, y[test])
    except ValueError:
        r2 = float("nan")
    return model, r2, history


# ---------------------------------------------------------------------------
# orchestration


class Pipeline:
    STAGES = ("data", "subgraph", "pool", "labels", "gnn1", "gnn2", "predict", "rank", "final", "baselines", "report")

    def __init__(self, cfg: PipelineConfig, run_dir: str | Path, log: Callable[[str], None] | None = None):
        self.cfg = cfg
        self.dir = Path(run_dir)
        self.log = log or (lambda msg: None)
        self.timings: dict[str, float] = {}
        self._cache: dict = {}

    # -- bookkeeping
    def _path(self, name: str) -> Path:
        return self.dir / f"{name}.json"

    def _check_dir(self) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        cfg_path = self._path("config")
        if cfg_path.exists():
            old = read_json(cfg_path)
            if PipelineConfig.from_dict(old).digest() != self.cfg.digest():
                raise PipelineError("config", f"{self.dir} holds a run with a different config")
        else:
            write_json(cfg_path, self.cfg.to_dict())

    def _stage(self, name: str, compute: Callable[[], dict]) -> dict:
        path = self._path(name)
        start = time.perf_counter()
        if path.exists():
            doc = read_json(path)
            self.log(f"{name}: loaded checkpoint")
        else:
            self.log(f"{name}: running")
            try:
                doc = compute()
            except PipelineError:
                raise
            except Exception as exc:  # surface the stage name with the cause
                raise PipelineError(name, f"{type(exc).__name__}: {exc}") from exc
            write_json(path, doc)
        self.timings[name] = time.perf_counter() - start
        return doc

    # -- shared state
    @property
    def topo(self) -> DeviceTopology:
        if "topo" not in self._cache:
            self._cache["topo"] = load_calibration(self.cfg.calibration)
        return self._cache["topo"]

    @property
    def data(self) -> PreparedData:
        if "data" not in self._cache:
            self._cache["data"] = prepare_data(self.cfg.dataset, self.cfg.p)
        return self._cache["data"]

    def noise(self, sub) -> NoiseModel:
        return NoiseModel.from_calibration(self.topo, sub)

    def baselines_only(self, which: Sequence[str]) -> dict[str, float]:
        """Compute the named baselines against this run's pool without touching its checkpoints."""
        self.run(stop_after="pool")
        sub_doc = read_json(self._path("subgraph"))
        sub = subgraph_from_dict(sub_doc["subgraph"])
        pool = [circuit_from_dict(d) for d in read_json(self._path("pool"))["circuits"]]
        noise = self.noise(sub) if self.cfg.eval_noise else None
        return run_baselines(self.cfg, self.data, pool, sub, sub_doc["gate_set"], noise, which)

    # -- stages
    def run(self, stop_after: str | None = None) -> RunReport | None:
        if stop_after is not None and stop_after not in self.STAGES:
            raise ValueError(f"unknown stage {stop_after!r}")
        self._check_dir()
        cfg = self.cfg

        data_doc = self._stage("data", lambda: {"selected": list(self.data.selected)})
        if stop_after == "data":
            return None

        def do_subgraph():
            excluded = cfg.exclude if cfg.exclude is not None else default_exclusion(self.topo.num_qubits)
            sub = select_subgraph(self.topo, cfg.n_qubits, excluded)
            return {"subgraph": subgraph_to_dict(sub), "gate_set": list(self.topo.gate_set), "excluded": excluded}

        sub_doc = self._stage("subgraph", do_subgraph)
        sub = subgraph_from_dict(sub_doc["subgraph"])
        gate_set = sub_doc["gate_set"]
        gates = cfg.gates if cfg.gates is not None else default_gate_budget(cfg.p, gate_set)
        if stop_after == "subgraph":
            return None

        pool_doc = self._stage("pool", lambda: {
            "gates": gates,
            "circuits": [circuit_to_dict(c) for c in generate_pool(sub, gate_set, cfg.pool_size, gates, cfg.p, cfg.seed)],
        })
        pool = [circuit_from_dict(d) for d in pool_doc["circuits"]]
        if stop_after == "pool":
            return None

        def do_labels():
            ids = sorted(np.random.default_rng([cfg.seed, 3]).choice(len(pool), cfg.label_sample, replace=False).tolist())
            rows = stratified_subset(self.data.y_train, cfg.kta_per_class, cfg.seed)
            pst_l, kta_l = label_pool(pool, ids, self.noise(sub), self.data.X_train[rows], self.data.y_train[rows],
                                      cfg.seed, self.data.num_classes, cfg.kta_angles, cfg.workers)
            return {"ids": ids, "pst": pst_l, "kta": kta_l}

        labels = self._stage("labels", do_labels)
        if stop_after == "labels":
            return None

        graphs = {}

        def pool_graphs(mode):
            if mode not in graphs:
                raw = graphs_for(pool, self.topo, mode, cfg.q_width)
                norm = fit_normalizer(raw)
                graphs[mode] = (norm, [norm.apply(g) for g in raw])
            return graphs[mode]

        surrogates = {}
        for tag, mode, key in ((1, FIDELITY, "pst"), (2, PERFORMANCE, "kta")):

            def do_gnn(tag=tag, mode=mode, key=key):
                norm, gs = pool_graphs(mode)
                ids = labels["ids"]
                model, r2, history = fit_surrogate([gs[i] for i in ids], labels[key], cfg, tag)
                return {"model": model_to_dict(model), "normalizer": norm.to_dict(), "r2": r2, "loss": history}

            surrogates[tag] = self._stage(f"gnn{tag}", do_gnn)
            if stop_after == f"gnn{tag}":
                return None

        def do_predict():
            out = {}
            for tag, mode in ((1, FIDELITY), (2, PERFORMANCE)):
                entry = surrogates[tag]
                norm = Normalizer.from_dict(entry["normalizer"])
                model = model_from_dict(entry["model"])
                gs = [norm.apply(g) for g in graphs_for(pool, self.topo, mode, cfg.q_width)]
                out["pst" if tag == 1 else "kta"] = predict_batch(model, gs)
            return out

        pred = self._stage("predict", do_predict)
        if stop_after == "predict":
            return None

        rank_doc = self._stage("rank", lambda: {"topk": rank_and_filter(pred["pst"], pred["kta"], cfg.pst_keep, cfg.top_k)})
        topk_ids = rank_doc["topk"]
        if stop_after == "rank":
            return None

        eval_noise = self.noise(sub) if cfg.eval_noise else None
        final_doc = self._stage("final", lambda: {
            "results": evaluate_circuits([pool[i] for i in topk_ids], topk_ids, self.data, cfg, eval_noise)
        })
        if stop_after == "final":
            return None

        base_doc = self._stage("baselines", lambda: run_baselines(cfg, self.data, pool, sub, gate_set, eval_noise))
        if stop_after == "baselines":
            return None

        accs = [r["test_accuracy"] for r in final_doc["results"]]
        best = int(np.argmax(accs))
        report = RunReport(
            config=cfg.to_dict(),
            subgraph=list(sub.qubit_ids),
            gates=pool_doc["gates"],
            selected_features=data_doc["selected"],
            gnn_r2={"pst": surrogates[1]["r2"], "kta": surrogates[2]["r2"]},
            candidates=[{"id": i, "pred_pst": _unit(a), "pred_kta": b} for i, (a, b) in enumerate(zip(pred["pst"], pred["kta"]))],
            topk=[{"id": cid, "pred_pst": _unit(pred["pst"][cid]), "pred_kta": pred["kta"][cid],
                   "final_kta": r["final_kta"], "test_accuracy": r["test_accuracy"]}
                  for cid, r in zip(topk_ids, final_doc["results"])],
            chosen_id=topk_ids[best],
            chosen_accuracy=accs[best],
            baselines=base_doc,
        )
        self._stage("report", report.to_dict)
        write_tables(report, self.dir)
        write_json(self._path("timings"), self.timings)
        return report


def _unit(v: float) -> float:
    # PST predictions are reported inside [0, 1]; ranking uses the raw values
    return min(max(float(v), 0.0), 1.0)


def write_tables(report: RunReport, run_dir: Path) -> None:
    run_dir = Path(run_dir)
    with open(run_dir / "candidates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "pred_pst", "pred_kta"])
        for row in report.candidates:
            w.writerow([row["id"], repr(row["pred_pst"]), repr(row["pred_kta"])])
    with open(run_dir / "topk.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "id", "pred_pst", "pred_kta", "final_kta", "test_accuracy", "chosen"])
        for k, row in enumerate(report.topk):
            w.writerow([k, row["id"], repr(row["pred_pst"]), repr(row["pred_kta"]), repr(row["final_kta"]),
                        repr(row["test_accuracy"]), int(row["id"] == report.chosen_id)])
    with open(run_dir / "baselines.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "test_accuracy"])
        w.writerow(["qkforge", repr(report.chosen_accuracy)])
        for name, acc in report.baselines.items():
            w.writerow([name, repr(acc)])


def run_pipeline(cfg: PipelineConfig, run_dir: str | Path, log=None) -> RunReport:
    return Pipeline(cfg, run_dir, log).run()
