"""Volume drift under fixed-step halving, ellipse(2,1), k=1, alpha=1.

Prints the drift at dt = ceiling, /2, /4, /8 and the observed orders for a few
resolutions.  At high N the drift sits at round-off and the order is noise.

    python3 scripts/drift_order.py [--N 64 128 256] [--t-end 1.0]
"""
import argparse
import time

import numpy as np

from qflow import body as cb
from qflow.algebra import SpeedLaw
from qflow.flow import FlowConfig, run, stability_ceiling


def study(N, t_end, levels, law):
    E = cb.ellipse(2.0, 1.0, N)
    dt0 = stability_ceiling(E, law, 0.9)
    drifts = []
    for j in range(levels):
        cfg = FlowConfig(law, t_end=t_end, dt_init=dt0 / 2 ** j, fixed_dt=True, snapshot_stride=10 ** 9)
        drifts.append(abs(run(E, cfg).records[-1].volume_drift))
    return dt0, drifts


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--t-end", type=float, default=1.0)
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--alpha", type=float, default=1.0)
    args = ap.parse_args()
    law = SpeedLaw(1, 1, args.alpha)
    print(f"{'N':>5} {'dt0':>9}  drifts / orders")
    for N in args.N:
        t0 = time.perf_counter()
        dt0, d = study(N, args.t_end, args.levels, law)
        orders = [np.log2(a / b) for a, b in zip(d, d[1:])]
        print(f"{N:5d} {dt0:9.2e}  " + " ".join(f"{x:.2e}" for x in d)
              + "  |  " + " ".join(f"{o:5.2f}" for o in orders) + f"  ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
