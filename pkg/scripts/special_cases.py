"""Metric reports for the closed-form fixtures and a heterodyne readout family."""

import argparse
import math

from qndmeter import channels, metrics

KEYS = ("F", "F_Q", "F_I", "D_D", "D_E", "D_P")


def cases(alpha: float):
    yield "projective(2)", channels.projective(2)
    yield "swap", channels.swap()
    for name, theta in (("pi/6", math.pi / 6), ("pi/4", math.pi / 4), ("pi/3", math.pi / 3), ("pi/2", math.pi / 2)):
        yield f"cos_sin_pair({name})", channels.cos_sin_pair(theta)
        yield f"decay({name})", channels.decay(theta)
    het = channels.heterodyne_kraus_family(alpha, -alpha)
    yield f"heterodyne(+-{alpha:g}) binned", het.binned


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--alpha", type=float, default=2.0, help="coherent amplitude for the heterodyne case")
    args = p.parse_args(argv)
    print(f"{'case':28s}" + "".join(f"{k:>10s}" for k in KEYS) + "  theorems")
    for name, k in cases(args.alpha):
        r = metrics.full_report(k)
        ok = all(c.holds for c in metrics.relationship_check(r))
        print(f"{name:28s}" + "".join(f"{getattr(r, key):10.6f}" for key in KEYS) + f"  {'ok' if ok else 'VIOLATED'}")


if __name__ == "__main__":
    main()
