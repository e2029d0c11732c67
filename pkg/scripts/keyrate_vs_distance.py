"""Key rate against fiber length for both models; writes a CSV and reports
where each curve reaches zero."""

import argparse
from pathlib import Path

from gmcs.cli import SweepSpec, parse_config, run_keyrate_sweep, write_keyrate_csv
from gmcs.keyrate import MODELS


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--stop", type=float, default=50.0, help="last distance, km")
    ap.add_argument("--step", type=float, default=0.05, help="distance step, km")
    ap.add_argument("--out", type=Path, default=Path("keyrate_vs_distance.csv"))
    args = ap.parse_args()

    sc = parse_config(None).scenario
    sweep = SweepSpec(0.0, args.stop, args.step, (1.0, 0.898), MODELS)
    rows = run_keyrate_sweep(sweep, sc.params, sc.epsilon_A, sc.n_el, sc.N_leak)
    write_keyrate_csv(rows, args.out)
    for model in MODELS:
        for beta in sweep.betas:
            curve = [(r[0], r[6]) for r in rows if r[2] == model and r[3] == beta]
            zero = next((d for d, rate in curve if rate == 0.0), None)
            where = f"{zero:.2f} km" if zero is not None else f"beyond {args.stop:g} km"
            print(f"{model:<10} beta={beta:<6g} R(0)={curve[0][1]:.4f}  zero at {where}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
