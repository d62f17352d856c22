"""Ensemble and single-trajectory readout traces at one detuning, written as CSV.

Outputs (in --out):
  ensemble.csv     time, basis, trajectory and Lindblad <a + a^dag>, <a^dag a>, <sigma_z>
  integrated.csv   per-trajectory integrated I and Q for both windows and both bases
  records.csv      heterodyne I record of a few single trajectories per basis
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from qndmeter import dispersive


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--delta-over-g", type=float, default=10.0)
    p.add_argument("--n-traj", type=int, default=1000)
    p.add_argument("--records", type=int, default=3, help="single trajectories to dump per basis")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-every", type=int, default=50)
    p.add_argument("--out", type=Path, default=Path("readout_traces"))
    args = p.parse_args(argv)

    cfg = dispersive.SimConfig(delta_over_g=args.delta_over_g, n_traj=args.n_traj, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    side = dispersive.calibrate_zero_side(cfg)

    with open(args.out / "ensemble.csv", "w", newline="") as fe, open(args.out / "integrated.csv", "w", newline="") as fi:
        ens, integ = csv.writer(fe, lineterminator="\n"), csv.writer(fi, lineterminator="\n")
        ens.writerow(["time", "basis", "x_traj", "x_lindblad", "n_traj", "n_lindblad", "sz_traj", "sz_lindblad"])
        integ.writerow(["basis", "trajectory", "i1", "q1", "i2", "q2", "outcome1", "outcome2"])
        for b in (0, 1):
            run = dispersive.run_two_measurement_experiment(cfg, b, zero_side=side, sample_every=args.sample_every)
            psi = dispersive.basis_state(cfg, b)
            lind = dispersive.lindblad_reference(cfg, np.outer(psi, psi.conj()), sample_every=args.sample_every)
            s = run.samples
            for row in zip(s["times"], s["x"], lind.x, s["number"], lind.number, s["sigma_z"], lind.sigma_z):
                t, *vals = row
                ens.writerow([f"{t:.17g}", b, *(f"{v:.17g}" for v in vals)])
            for j in range(cfg.n_traj):
                iq = run.iq[j]
                integ.writerow([b, j, *(f"{v:.17g}" for v in iq.ravel()), *run.outcomes[j]])
            print(f"basis {b}: counts {run.counts.tolist()}, <n> after reset {run.photons_after_reset:.4f}")

    with open(args.out / "records.csv", "w", newline="") as fr:
        rec = csv.writer(fr, lineterminator="\n")
        rec.writerow(["basis", "trajectory", "time", "signal_i", "signal_q"])
        for b in (0, 1):
            for j in range(args.records):
                stream = dispersive.trajectory_stream(cfg.seed, 0, b, j)
                traj = dispersive.run_heterodyne_trajectory(cfg, dispersive.basis_state(cfg, b), rng_stream=stream)
                for t, i, q in zip(traj.times, traj.signal_i, traj.signal_q):
                    rec.writerow([b, j, f"{t:.17g}", f"{i:.17g}", f"{q:.17g}"])
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
