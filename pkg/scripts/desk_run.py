"""Desk-scale experiments: surrogate quality and end-to-end kernel selection.

    python scripts/desk_run.py surrogates --run-dir runs/surrogates
    python scripts/desk_run.py selection --run-dir runs/selection --seeds 0 1 2

``surrogates`` labels 2000 circuits and reports held-out R^2 of both
surrogates on a 1600/400 split. ``selection`` runs the whole pipeline on the
two-class synthetic task and compares the chosen kernel with the baselines.
Extra ``--set key=value`` pairs override config fields as in the CLI.
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np
import torch

from qkforge.cli import load_config
from qkforge.pipeline import Pipeline, read_json


def surrogates(args) -> None:
    cfg = load_config(args.config, ["pool_size=2000", "label_sample=2000", "gnn_test_fraction=0.2", *args.set])
    start = time.perf_counter()
    pipe = Pipeline(cfg, Path(args.run_dir), print)
    pipe.run(stop_after="gnn2")
    out = {"pst_r2": read_json(pipe.dir / "gnn1.json")["r2"], "kta_r2": read_json(pipe.dir / "gnn2.json")["r2"],
           "minutes": (time.perf_counter() - start) / 60, "timings": pipe.timings}
    print(json.dumps(out, indent=2))


def selection(args) -> None:
    rows = []
    for seed in args.seeds:
        cfg = load_config(args.config, [f"seed={seed}", *args.set])
        report = Pipeline(cfg, Path(args.run_dir) / f"seed{seed}", print).run()
        rows.append({"seed": seed, "chosen": report.chosen_accuracy, **report.baselines, "gnn_r2": report.gnn_r2})
        print(json.dumps(rows[-1]))
    for key in ("chosen", "random", "tek", "rbfk"):
        vals = [r[key] for r in rows if key in r]
        if vals:
            print(f"{key:>7}: mean {np.mean(vals):.3f}  min {np.min(vals):.3f}  max {np.max(vals):.3f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=("surrogates", "selection"))
    ap.add_argument("--run-dir", required=True)
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    args = ap.parse_args()
    torch.set_num_threads(1)
    {"surrogates": surrogates, "selection": selection}[args.experiment](args)


if __name__ == "__main__":
    main()
