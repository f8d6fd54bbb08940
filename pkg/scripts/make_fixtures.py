"""Write the synthetic calibration fixtures to JSON so the CLI can read them as files.

    python scripts/make_fixtures.py --out fixtures/
"""

import argparse
from pathlib import Path

from qkforge.device import save_topology
from qkforge.fixtures import injected_bad_qubits, seven_qubit_h, torino_like


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="fixtures")
    ap.add_argument("--seed", type=int, default=7, help="seed of the 133-qubit fixture")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_topology(torino_like(args.seed), out / "torino_like.json")
    save_topology(seven_qubit_h(), out / "perth_like.json")
    bad_gate, bad_readout = injected_bad_qubits(args.seed)
    print(f"wrote {out / 'torino_like.json'} (injected bad gate qubits {sorted(bad_gate)}, "
          f"bad readout qubits {sorted(bad_readout)})")
    print(f"wrote {out / 'perth_like.json'}")


if __name__ == "__main__":
    main()
