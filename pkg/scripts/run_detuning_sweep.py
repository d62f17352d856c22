"""Detuning sweep of readout error, non-projectivity and demolition, with per-repeat argmins.

Writes the sweep CSV (same schema as ``qndmeter sweep``) and prints where each metric is minimised.
"""

import argparse
import sys
from pathlib import Path

from qndmeter import dispersive


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--grid", type=lambda s: tuple(float(x) for x in s.split(",")), default=dispersive.DEFAULT_GRID)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--n-traj", type=int, default=1000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", type=Path, default=Path("detuning_sweep.csv"))
    args = p.parse_args(argv)

    cfg = dispersive.SimConfig(n_traj=args.n_traj, seed=args.seed)
    total = len(args.grid) * args.repeats * 2
    done = []

    def progress(_task):
        done.append(1)
        print(f"\r{len(done)}/{total} ensembles", end="", file=sys.stderr, flush=True)

    res = dispersive.run_detuning_sweep(cfg, args.grid, args.repeats, args.threads, progress)
    print(file=sys.stderr)
    args.out.write_text(dispersive.sweep_csv(res, {"seed": args.seed}))
    for name, col in (("readout error", 0), ("non-projectivity", 1), ("demolition", 2)):
        print(f"argmin {name:17s}: {res.argmin_per_repeat(col)}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
