"""Graph-attention surrogate for PST / KTA prediction.

Four single-head additive attention layers (width = node feature width) run
over the circuit DAG with reverse edges and self-loops added. Key nodes are
mean-pooled, concatenated with a 3->12->12->12 global-feature MLP, and fed to
a 256-128-64-1 head. All activations are LeakyReLU(0.02).
"""

from __future__ import annotations

import copy
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .features import CircuitGraph, feature_width

SLOPE = 0.02
NUM_LAYERS = 4
GLOBAL_HIDDEN = 12
HEAD_SIZES = (256, 128, 64)


@dataclass
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 512
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class GraphBatch:
    x: torch.Tensor
    src: torch.Tensor
    dst: torch.Tensor
    node_graph: torch.Tensor
    key: torch.Tensor
    globals: torch.Tensor
    num_graphs: int
    # CSR form of the aggregation: parallel edges share one (dst, src) slot
    crow: torch.Tensor | None = None
    col: torch.Tensor | None = None
    slot: torch.Tensor | None = None


def collate(graphs: Sequence[CircuitGraph], dtype=torch.float32) -> GraphBatch:
    """Disjoint union of ``graphs`` with reverse edges and self-loops."""
    sizes = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]) if len(graphs) else np.zeros(0, dtype=np.int64)
    total = int(sizes.sum())
    if graphs:
        e = np.concatenate([g.edges + off for g, off in zip(graphs, offsets)])
        x = np.concatenate([g.x for g in graphs])
        key = np.concatenate([g.key_mask for g in graphs])
        glob = np.stack([g.globals for g in graphs])
    else:
        e = np.zeros((0, 2), dtype=np.int64)
        x = np.zeros((0, 0))
        key = np.zeros(0, dtype=bool)
        glob = np.zeros((0, 3))
    loops = np.arange(total)
    src = np.concatenate([e[:, 0], e[:, 1], loops])
    dst = np.concatenate([e[:, 1], e[:, 0], loops])
    pairs, slot = np.unique(dst * max(total, 1) + src, return_inverse=True)
    crow = np.concatenate([[0], np.cumsum(np.bincount(pairs // max(total, 1), minlength=total))])
    return GraphBatch(
        x=torch.as_tensor(x, dtype=dtype),
        src=torch.as_tensor(src, dtype=torch.long),
        dst=torch.as_tensor(dst, dtype=torch.long),
        node_graph=torch.as_tensor(np.repeat(np.arange(len(graphs)), sizes), dtype=torch.long),
        key=torch.as_tensor(key),
        globals=torch.as_tensor(glob, dtype=dtype),
        num_graphs=len(graphs),
        crow=torch.as_tensor(crow, dtype=torch.long),
        col=torch.as_tensor(pairs % max(total, 1), dtype=torch.long),
        slot=torch.as_tensor(slot.reshape(-1), dtype=torch.long),
    )


def _act(t: torch.Tensor) -> torch.Tensor:
    return nn.functional.leaky_relu(t, SLOPE)


def _csr(crow: torch.Tensor, col: torch.Tensor, values: torch.Tensor, n: int) -> torch.Tensor:
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Sparse CSR tensor support is in beta")
        return torch.sparse_csr_tensor(crow, col, values, (n, n), check_invariants=False)


class AttentionLayer(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.lin = nn.Linear(width, width)
        self.att_src = nn.Parameter(torch.empty(width))
        self.att_dst = nn.Parameter(torch.empty(width))

    def coefficients(self, z: torch.Tensor, src: torch.Tensor, dst: torch.Tensor) -> torch.Tensor:
        """Softmax-normalized attention per edge, grouped by destination node."""
        score = _act((z @ self.att_src)[src] + (z @ self.att_dst)[dst])
        peak = torch.full((z.shape[0],), -math.inf, dtype=z.dtype).scatter_reduce(
            0, dst, score, reduce="amax", include_self=True
        )
        w = torch.exp(score - peak[dst].detach())
        denom = torch.zeros(z.shape[0], dtype=z.dtype).index_add(0, dst, w)
        return w / denom[dst]

    def forward(self, h: torch.Tensor, src: torch.Tensor, dst: torch.Tensor, csr: tuple | None = None) -> torch.Tensor:
        z = self.lin(h)
        alpha = self.coefficients(z, src, dst)
        if csr is None:
            out = torch.zeros_like(z).index_add(0, dst, alpha.unsqueeze(-1) * z.index_select(0, src))
        else:
            # the same sum as a sparse product
            crow, col, slot = csr
            values = torch.zeros(col.shape[0], dtype=z.dtype).index_add(0, slot, alpha)
            out = _csr(crow, col, values, z.shape[0]) @ z
        return _act(out)


class SurrogateModel(nn.Module):
    def __init__(self, q_width: int = 16, seed: int = 0, dtype=torch.float32):
        super().__init__()
        self.q_width = q_width
        width = feature_width(q_width)
        self.width = width
        self.layers = nn.ModuleList(AttentionLayer(width) for _ in range(NUM_LAYERS))
        self.glob = nn.ModuleList(
            [nn.Linear(3, GLOBAL_HIDDEN), nn.Linear(GLOBAL_HIDDEN, GLOBAL_HIDDEN), nn.Linear(GLOBAL_HIDDEN, GLOBAL_HIDDEN)]
        )
        sizes = (width + GLOBAL_HIDDEN,) + HEAD_SIZES + (1,)
        self.head = nn.ModuleList(nn.Linear(a, b) for a, b in zip(sizes[:-1], sizes[1:]))
        # affine map from the head's standardized output back to label units; set by train()
        self.register_buffer("target_shift", torch.zeros(()))
        self.register_buffer("target_scale", torch.ones(()))
        self.reset_parameters(seed)
        self.to(dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.head[0].weight.dtype

    def reset_parameters(self, seed: int) -> None:
        """Glorot-uniform weights drawn from a numpy generator, zero biases."""
        rng = np.random.default_rng(seed)
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name.endswith("bias"):
                    p.zero_()
                    continue
                fan_out, fan_in = (p.shape[0], p.shape[1]) if p.ndim == 2 else (1, p.shape[0])
                bound = math.sqrt(6.0 / (fan_in + fan_out))
                p.copy_(torch.as_tensor(rng.uniform(-bound, bound, tuple(p.shape))))

    def embed(self, batch: GraphBatch) -> torch.Tensor:
        """Pooled 31-dim (for Q=16) graph representation."""
        h = batch.x
        if h.shape[1] != self.width:
            raise ValueError(f"node features have width {h.shape[1]}, model expects {self.width}")
        # the sparse product is faster at inference, while index_add trains faster on small batches
        use_csr = batch.crow is not None and not torch.is_grad_enabled()
        csr = (batch.crow, batch.col, batch.slot) if use_csr else None
        for layer in self.layers:
            h = layer(h, batch.src, batch.dst, csr)
        keyf = batch.key.to(h.dtype).unsqueeze(-1)
        pooled = torch.zeros(batch.num_graphs, self.width, dtype=h.dtype).index_add(0, batch.node_graph, h * keyf)
        counts = torch.zeros(batch.num_graphs, dtype=h.dtype).index_add(0, batch.node_graph, keyf.squeeze(-1))
        return pooled / counts.clamp(min=1.0).unsqueeze(-1)

    def forward(self, batch: GraphBatch) -> torch.Tensor:
        return self.standardized(batch) * self.target_scale + self.target_shift

    def standardized(self, batch: GraphBatch) -> torch.Tensor:
        """Head output before the label-unit affine map."""
        pooled = self.embed(batch)
        g = batch.globals
        for lin in self.glob:
            g = _act(lin(g))
        out = torch.cat([pooled, g], dim=-1)
        for k, lin in enumerate(self.head):
            out = lin(out)
            if k < len(self.head) - 1:
                out = _act(out)
        return out.squeeze(-1)

    def attention(self, batch: GraphBatch) -> list[torch.Tensor]:
        coeffs = []
        h = batch.x
        with torch.no_grad():
            for layer in self.layers:
                coeffs.append(layer.coefficients(layer.lin(h), batch.src, batch.dst))
                h = layer(h, batch.src, batch.dst)
        return coeffs


def forward(model: SurrogateModel, graph: CircuitGraph) -> float:
    with torch.no_grad():
        return float(model(collate([graph], model.dtype))[0])


def predict_batch(model: SurrogateModel, graphs: Sequence[CircuitGraph], chunk: int = 2048) -> list[float]:
    if not graphs:
        return []
    out = []
    with torch.inference_mode():
        for start in range(0, len(graphs), chunk):
            out.append(model(collate(graphs[start:start + chunk], model.dtype)).numpy())
    return np.concatenate(out).astype(float).tolist()


def train(
    model: SurrogateModel,
    graphs: Sequence[CircuitGraph],
    targets: Sequence[float],
    cfg: TrainConfig = TrainConfig(),
) -> tuple[SurrogateModel, list[float]]:
    """Mini-batch Adam on MSE. The shuffle order comes from ``cfg.seed`` only.

    Targets are standardized with the training-set mean and standard deviation
    before the loss; the model stores both so predictions come back in label
    units. The returned loss history is in standardized units.
    """
    if not graphs:
        raise ValueError("empty training set")
    y = np.asarray(targets, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    shift, scale = float(y.mean()), float(y.std())
    if scale <= 0:
        scale = 1.0
    with torch.no_grad():
        model.target_shift.fill_(shift)
        model.target_scale.fill_(scale)
    z = (y - shift) / scale
    rng = np.random.default_rng(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    history = []
    n = len(graphs)
    model.train()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = collate([graphs[i] for i in idx], model.dtype)
            target = torch.as_tensor(z[idx], dtype=model.dtype)
            opt.zero_grad()
            loss = torch.mean((model.standardized(batch) - target) ** 2)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        history.append(total / n)
    model.eval()
    return model, history


def r_squared(preds: Sequence[float], targets: Sequence[float]) -> float:
    p = np.asarray(preds, dtype=float)
    y = np.asarray(targets, dtype=float)
    if p.shape != y.shape or y.size < 2:
        raise ValueError("need two equal-length sequences of at least 2 values")
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise ValueError("targets have zero variance")
    return float(1.0 - np.sum((y - p) ** 2) / ss_tot)


def gradient_check(
    model: SurrogateModel, graph: CircuitGraph, target: float, num_params: int = 100, h: float = 1e-5, seed: int = 0
) -> float:
    """Largest relative gap between backprop and central differences of the squared error.

    Runs in float64 (on a copy when the model is single precision). Gaps are
    measured relative to max(|analytic|, |numeric|, 1e-3 * largest numeric
    gradient in the sample) so exactly-zero components do not blow up the ratio.
    """
    if model.dtype != torch.float64:
        model = copy.deepcopy(model).to(torch.float64)
    batch = collate([graph], torch.float64)
    t = torch.tensor([target], dtype=torch.float64)

    def loss_value():
        return torch.mean((model(batch) - t) ** 2)

    model.zero_grad()
    loss_value().backward()
    params = list(model.parameters())
    flat = [(k, i) for k, p in enumerate(params) for i in range(p.numel())]
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(flat), size=min(num_params, len(flat)), replace=False)
    analytic, numeric = [], []
    with torch.no_grad():
        for idx in pick:
            k, i = flat[idx]
            p = params[k].view(-1)
            analytic.append(float(params[k].grad.view(-1)[i]))
            orig = float(p[i])
            p[i] = orig + h
            up = float(loss_value())
            p[i] = orig - h
            down = float(loss_value())
            p[i] = orig
            numeric.append((up - down) / (2 * h))
    a, b = np.array(analytic), np.array(numeric)
    floor = max(1e-3 * np.abs(b).max(), 1e-12)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


# ---------------------------------------------------------------------------
# persistence


def model_to_dict(model: SurrogateModel) -> dict:
    return {
        "q_width": model.q_width,
        "feature_width": model.width,
        "params": [
            {"name": name, "shape": list(p.shape), "data": p.detach().double().reshape(-1).tolist()}
            for name, p in model.state_dict().items()
        ],
    }


def model_from_dict(doc: dict, dtype=torch.float32) -> SurrogateModel:
    model = SurrogateModel(q_width=int(doc["q_width"]), dtype=dtype)
    if int(doc["feature_width"]) != model.width:
        raise ValueError("feature width does not match q_width")
    state = model.state_dict()
    entries = {e["name"]: e for e in doc["params"]}
    if set(entries) != set(state):
        raise ValueError("parameter names do not match the model layout")
    loaded = {}
    for name, ref in state.items():
        e = entries[name]
        if tuple(e["shape"]) != tuple(ref.shape) or len(e["data"]) != ref.numel():
            raise ValueError(f"shape mismatch for {name}: {e['shape']} vs {list(ref.shape)}")
        loaded[name] = torch.tensor(e["data"], dtype=dtype).reshape(ref.shape)
    model.load_state_dict(loaded)
    model.eval()
    return model


def save_model(model: SurrogateModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path: str | Path, dtype=torch.float32) -> SurrogateModel:
    return model_from_dict(json.loads(Path(path).read_text()), dtype)
