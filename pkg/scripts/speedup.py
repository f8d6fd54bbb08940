"""Time surrogate prediction against direct PST and KTA labeling on 100 pool circuits.

    python scripts/speedup.py --n 7 --circuits 100
"""

import argparse
import json

import torch

from qkforge.pipeline import PipelineConfig, load_calibration, prepare_data
from qkforge.timing import measure_speedup


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--calib", default="fixture:torino_like")
    ap.add_argument("--n", type=int, default=7)
    ap.add_argument("--circuits", type=int, default=100)
    ap.add_argument("--per-class", type=int, default=10)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    torch.set_num_threads(1)
    data = prepare_data(PipelineConfig().dataset, 14)
    res = measure_speedup(load_calibration(args.calib), data, args.n, args.circuits, args.per_class, args.seed,
                          args.repeats)
    print(json.dumps(res.to_dict(), indent=2))
    print(f"PST: {res.pst_direct_s * 1e3:.2f} ms direct vs {res.pst_predict_s * 1e6:.0f} us predicted "
          f"({res.pst_speedup:.0f}x)")
    print(f"KTA: {res.kta_direct_s * 1e3:.2f} ms direct vs {res.kta_predict_s * 1e6:.0f} us predicted "
          f"({res.kta_speedup:.0f}x)")
    print(f"featurization adds {res.featurize_s * 1e6:.0f} us per circuit")


if __name__ == "__main__":
    main()
