"""Resolution study of the ellipse run: limit radius, final roundness, eps_disc.

Runs ellipse(a,b), k=1 at each N to t_end and compares each run with the next
coarser one through the same interpolation the CLI uses for eps_disc.

    python3 scripts/refinement_study.py [--N 32 64 128 256] [--alpha 1]
"""
import argparse
import time
from math import sqrt

from qflow import body as cb
from qflow.algebra import SpeedLaw
from qflow.diagnostics import discretization_allowance
from qflow.flow import FlowConfig, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--a", type=float, default=2.0)
    ap.add_argument("--b", type=float, default=1.0)
    ap.add_argument("--t-end", type=float, default=5.0)
    args = ap.parse_args()
    law = SpeedLaw(1, 1, args.alpha)
    cfg = FlowConfig(law, t_end=args.t_end, dt_init=1e-5, snapshot_stride=50)
    target = sqrt(args.a * args.b)
    prev = None
    print(f"{'N':>5} {'steps':>7} {'|R-R_vol|':>10} {'hausdorff':>10} {'drift':>9} {'eps_perim':>10} {'eps_iso':>10}")
    for N in args.N:
        t0 = time.perf_counter()
        traj = run(cb.ellipse(args.a, args.b, N), cfg)
        last = traj.records[-1]
        eps = discretization_allowance(traj.records, prev.records) if prev is not None else {}
        print(f"{N:5d} {last.step:7d} {abs(0.5 * (last.R_plus + last.R_minus) - target):10.2e} "
              f"{last.hausdorff_ball:10.2e} {last.volume_drift:9.1e} "
              f"{eps.get('curvature_integral_km1', float('nan')):10.2e} {eps.get('iso_ratio', float('nan')):10.2e}"
              f"  ({time.perf_counter() - t0:.1f}s)")
        prev = traj


if __name__ == "__main__":
    main()
