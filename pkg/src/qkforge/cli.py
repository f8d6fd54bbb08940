"""Command-line entry point.

Run-directory verbs execute the pipeline up to and including their stage,
reusing checkpoints already on disk. ``subgraph``, ``calib-report`` and
``select-features`` are standalone; ``gen`` and ``train-kernel`` also have a
standalone form that works on plain files instead of a run directory.

Data files for the standalone verbs are CSV with a header row; the column
named ``label`` (or ``Class``) holds integer labels and every other column is
a feature.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .circuits import dumps_circuit, loads_circuit, default_gate_budget
from .datasets import AngleScaler
from .device import DEFAULT_NOISE_ORDER, calib_report, default_exclusion, select_subgraph, subgraph_from_dict, subgraph_to_dict, write_report_csv
from .kernels import kernel_matrix, kta, save_kernel_csv, train_kernel_params
from .mrmr import mrmr_select
from .pipeline import Pipeline, PipelineConfig, PipelineError, generate_pool, load_calibration

STAGE_VERBS = {
    "gen": "pool",
    "label": "labels",
    "train-gnn": None,  # gnn1 or gnn2 from --which
    "predict": "predict",
    "rank": "rank",
    "train-kernel": "final",
    "baseline": "baselines",
    "pipeline": "report",
}
LABEL_COLUMNS = ("label", "Class")


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: str | None, overrides: list[str]) -> PipelineConfig:
    """JSON config file (optional) plus ``key=value`` overrides; dotted keys reach into ``dataset``."""
    doc = json.loads(Path(path).read_text()) if path else {}
    for item in overrides:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        target = doc
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = parse_value(value)
    if "dataset" in doc and doc["dataset"].get("kind", "synthetic-blobs") == "synthetic-blobs":
        doc["dataset"] = {**PipelineConfig().dataset, **doc["dataset"]}
    return PipelineConfig.from_dict(doc)


def read_table(path: str) -> tuple[np.ndarray, np.ndarray]:
    df = pd.read_csv(path)
    col = next((c for c in LABEL_COLUMNS if c in df.columns), None)
    if col is None:
        raise SystemExit(f"{path}: expected a 'label' or 'Class' column")
    return df.drop(columns=[col]).to_numpy(dtype=float), df[col].to_numpy(dtype=int)


def emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _add_run_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
    p.add_argument("--run-dir", required=required)
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qkforge", description="hardware-aware quantum kernel search")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("subgraph", help="pick an N-qubit subgraph from a calibration")
    p.add_argument("--calib", "--calibration", dest="calib", required=True, help="calibration JSON or fixture:<name>")
    p.add_argument("--n", "-n", dest="n", type=int, required=True)
    p.add_argument("--exclude", type=int, default=None, help="E_xc per noise type (default ceil(10%% of qubits))")
    p.add_argument("--noise-order", default=",".join(DEFAULT_NOISE_ORDER))
    p.add_argument("--out")

    p = sub.add_parser("calib-report", help="rank qubits or couplings by one noise type, worst first")
    p.add_argument("--calib", "--calibration", dest="calib", required=True)
    p.add_argument("--type", default="readout", help="readout, 1q_gate, 1q_gate:<gate> or 2q_gate")
    p.add_argument("--out", help="CSV path (stdout when omitted)")

    p = sub.add_parser("select-features", help="mRMR ranking of the columns of a labeled CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out")

    for verb, stage in STAGE_VERBS.items():
        standalone = verb in ("gen", "train-kernel")
        p = sub.add_parser(verb, help=f"run the pipeline through the {stage or 'gnn'} stage")
        _add_run_args(p, required=not standalone)
        if verb == "train-gnn":
            p.add_argument("--which", type=int, choices=(1, 2), required=True)
        if verb == "baseline":
            p.add_argument("--methods", default=None, help="comma-separated subset of random,tek,rbfk")
        if verb == "gen":
            p.add_argument("--subgraph", help="subgraph JSON (standalone mode, needs gate_set)")
            p.add_argument("--count", type=int, default=100)
            p.add_argument("--gates", type=int, default=None)
            p.add_argument("--p", type=int, default=14, help="embedding dimension")
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--out", help="output directory (standalone mode)")
        if verb == "train-kernel":
            p.add_argument("--circuit", help="circuit JSON (standalone mode)")
            p.add_argument("--data", help="training CSV (standalone mode)")
            p.add_argument("--steps", type=int, default=100)
            p.add_argument("--lr", type=float, default=0.01)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--out", help="output directory for params.json and kernel.csv")
    return ap


def _gen_standalone(args) -> int:
    doc = json.loads(Path(args.subgraph).read_text())
    if "gate_set" not in doc:
        raise SystemExit("subgraph file needs a gate_set field (as written by `qkforge subgraph`)")
    sub = subgraph_from_dict(doc)
    gates = args.gates if args.gates is not None else default_gate_budget(args.p, doc["gate_set"])
    pool = generate_pool(sub, doc["gate_set"], args.count, gates, args.p, args.seed)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    for i, c in enumerate(pool):
        (out / f"circuit_{i:05d}.json").write_text(dumps_circuit(c))
    print(json.dumps({"count": len(pool), "gates": gates, "out": str(out)}))
    return 0


def _train_kernel_standalone(args) -> int:
    if not args.data:
        raise SystemExit("--data is required with --circuit")
    circuit = loads_circuit(Path(args.circuit).read_text())
    X, y = read_table(args.data)
    X = AngleScaler.fit(X).transform(X)
    params, history = train_kernel_params(circuit, X, y, steps=args.steps, lr=args.lr, seed=args.seed)
    K = kernel_matrix(circuit, params, X)
    result = {"params": params.tolist(), "kta_history": history, "final_kta": kta(K, y)}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "params.json").write_text(json.dumps(result))
        save_kernel_csv(K, out / "kernel.csv")
    print(json.dumps({"final_kta": result["final_kta"], "steps": len(history)}))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "subgraph":
        topo = load_calibration(args.calib)
        excluded = args.exclude if args.exclude is not None else default_exclusion(topo.num_qubits)
        sg = select_subgraph(topo, args.n, excluded, tuple(args.noise_order.split(",")))
        emit(json.dumps({**subgraph_to_dict(sg), "gate_set": list(topo.gate_set), "excluded": excluded}, indent=2),
             args.out)
        return 0
    if args.verb == "calib-report":
        rows = calib_report(load_calibration(args.calib), args.type)
        if args.out:
            write_report_csv(rows, args.out)
        else:
            print("target,error")
            for label, err in rows:
                print(f"{label},{err!r}")
        return 0
    if args.verb == "select-features":
        X, y = read_table(args.data)
        res = mrmr_select(X, y, args.p, args.bins)
        emit(json.dumps({"selected": list(res.selected), "scores": list(res.scores)}), args.out)
        return 0
    if args.verb == "gen" and args.subgraph:
        return _gen_standalone(args)
    if args.verb == "train-kernel" and args.circuit:
        return _train_kernel_standalone(args)
    if not args.run_dir:
        raise SystemExit(f"{args.verb}: --run-dir is required")

    cfg = load_config(args.config, list(args.set))
    stage = STAGE_VERBS[args.verb] or f"gnn{args.which}"
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        pipe = Pipeline(cfg, args.run_dir, log)
        if args.verb == "baseline" and args.methods:
            print(json.dumps(pipe.baselines_only(args.methods.split(",")), indent=2))
            return 0
        report = pipe.run(stop_after=stage)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if report is not None:
        summary = {"chosen_id": report.chosen_id, "chosen_accuracy": report.chosen_accuracy,
                   "gnn_r2": report.gnn_r2, "baselines": report.baselines}
        print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
