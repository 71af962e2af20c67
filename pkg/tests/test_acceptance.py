"""Acceptance criteria 1-8, one PASS/FAIL line each.

Run as part of the suite (lines appear in the terminal summary) or directly:
    python3 tests/test_acceptance.py
"""
import sys
import time
from math import pi, sqrt

import numpy as np
import pytest

from qflow import body as cb
from qflow.algebra import SpeedLaw
from qflow.body import Backend
from qflow.cli import main
from qflow.diagnostics import (FAIL, PASS, audit_balance, audit_decay, audit_envelopes, audit_monotone,
                               audit_pinching, audit_ros_sequence, discretization_allowance)
from qflow.errors import ConvexityLossError, StepFailure
from qflow.flow import FlowConfig, FlowState, run, stability_ceiling, step
from qflow.verify import suite_algebra, suite_body, suite_static_inequalities

SEED = 20240611
ALPHAS = (0.5, 1.0, 2.0)


def record(log, n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    log.append(line)
    return ok


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def ellipse_cfg(alpha, **kw):
    kw.setdefault("snapshot_stride", 100)
    return FlowConfig(SpeedLaw(1, 1, alpha), t_end=5.0, dt_init=1e-5, **kw)


@pytest.fixture(scope="module")
def ellipse_runs():
    """ellipse(2,1), k=1, N=256 on [0,5] plus the N=128 twin, for each alpha."""
    out = {}
    for alpha in ALPHAS:
        fine, secs = timed(run, cb.ellipse(2.0, 1.0, 256), ellipse_cfg(alpha))
        coarse = run(cb.ellipse(2.0, 1.0, 128), ellipse_cfg(alpha))
        out[alpha] = (fine, coarse, secs)
    return out


@pytest.fixture(scope="module")
def ellipse_corrected():
    return timed(run, cb.ellipse(2.0, 1.0, 256), ellipse_cfg(1.0, volume_correct=True))


@pytest.fixture(scope="module")
def axi_run():
    cfg = FlowConfig(SpeedLaw(2, 2, 1.0), t_end=20.0, dt_init=1e-6, roundness_stop=1e-4, snapshot_stride=200)
    return timed(run, cb.ellipsoid_rev(1.0, 1.6, 256), cfg)


def drift_order(N=64, t_end=1.0, levels=3):
    """Observed order of the relative volume drift under fixed-step halving."""
    law = SpeedLaw(1, 1, 1.0)
    E = cb.ellipse(2.0, 1.0, N)
    dt0 = stability_ceiling(E, law, 0.9)
    drifts = []
    for j in range(levels):
        cfg = FlowConfig(law, t_end=t_end, dt_init=dt0 / 2 ** j, fixed_dt=True, snapshot_stride=10 ** 9)
        drifts.append(abs(run(E, cfg).records[-1].volume_drift))
    return [float(np.log2(a / b)) for a, b in zip(drifts, drifts[1:])], drifts


def test_criterion_1_algebra(acceptance_log):
    checks, secs = timed(suite_algebra, SEED)
    worst = max(c.value for c in checks)
    ok = all(c.ok for c in checks) and secs < 10
    record(acceptance_log, 1, ok, f"{len(checks)} identity checks, worst residual {worst:.2e} <= 1e-10, "
                                  f"{secs:.1f}s < 10s")
    assert ok


def test_criterion_2_geometry(acceptance_log):
    t0 = time.perf_counter()
    checks = suite_body(SEED) + suite_static_inequalities(SEED)
    secs = time.perf_counter() - t0
    bad = [c.name for c in checks if not c.ok]
    ok = not bad and secs < 30
    record(acceptance_log, 2, ok, f"{len(checks)} geometry/inequality checks, failing={bad}, {secs:.1f}s < 30s")
    assert ok


def test_criterion_3_conservation(acceptance_log, ellipse_runs, ellipse_corrected):
    fine, _, secs = ellipse_runs[1.0]
    drift = max(abs(r.volume_drift) for r in fine.records)
    corrected, secs_c = ellipse_corrected
    drift_c = max(abs(r.volume_drift) for r in corrected.records)
    (orders, drifts), secs_o = timed(drift_order)
    total = secs + secs_c + secs_o
    ok = (fine.stop_reason == "t_end" and drift <= 1e-4 and drift_c <= 1e-12 and min(orders) >= 2
          and total < 60)
    record(acceptance_log, 3, ok, f"drift {drift:.1e} <= 1e-4, corrected {drift_c:.1e} <= 1e-12, "
                                  f"order {['%.2f' % o for o in orders]} >= 2 (N=64 fixed dt), {total:.1f}s < 60s")
    assert ok


def test_criterion_4_monotone_balance(acceptance_log, ellipse_runs):
    parts, ok = [], True
    for alpha, (fine, coarse, _) in ellipse_runs.items():
        eps = discretization_allowance(fine.records, coarse.records)
        mono = audit_monotone(fine.records, eps)
        bal = audit_balance(fine.records, tol=0.05)
        ok &= mono.verdict == PASS and bal.verdict == PASS
        parts.append(f"alpha={alpha}: monotone {mono.verdict}, balance max {bal.details['max_mismatch']:.1e}")
    record(acceptance_log, 4, ok, "; ".join(parts))
    assert ok


def test_criterion_5_convergence(acceptance_log, ellipse_runs, axi_run):
    last = ellipse_runs[1.0][0].records[-1]
    gap = last.R_plus - last.R_minus
    r_lim = 0.5 * (last.R_plus + last.R_minus)
    ok_e = gap <= 1e-3 and last.hausdorff_ball <= 1e-3 and abs(r_lim - sqrt(2)) <= 1e-3
    traj, secs = axi_run
    first, fin = traj.records[0], traj.records[-1]
    target = (3 * first.volume / (4 * pi)) ** (1 / 3)
    r_axi = 0.5 * (fin.R_plus + fin.R_minus)
    ok_a = traj.failure is None and abs(r_axi - target) <= 1e-3 and secs < 180
    ok = ok_e and ok_a
    record(acceptance_log, 5, ok, f"ellipse gap {gap:.1e}, hausdorff {last.hausdorff_ball:.1e}, "
                                  f"|R-sqrt2| {abs(r_lim - sqrt(2)):.1e}; ellipsoid |R-R_vol| "
                                  f"{abs(r_axi - target):.1e} ({traj.stop_reason} at t={fin.t:.2f}, {secs:.0f}s < 180s)")
    assert ok


def test_criterion_6_decay(acceptance_log, axi_run):
    traj, _ = axi_run
    recs = traj.records
    law = SpeedLaw(2, 2, 1.0)
    decay = audit_decay(recs, roundness_tol=1e-3)
    ros = audit_ros_sequence(recs, law, 1e-3)
    rate = decay.details["rate"]
    l2_0, l2_f = recs[0].l2_deviation, recs[-1].l2_deviation
    ok = (l2_f < 1e-6 and l2_f < l2_0 and rate["slope"] is not None and rate["slope"] < 0
          and rate["r_squared"] >= 0.95 and ros.verdict == PASS)
    record(acceptance_log, 6, ok, f"L2 {l2_0:.1e} -> {l2_f:.1e} < 1e-6, gap slope {rate['slope']:.2f} "
                                  f"R^2 {rate['r_squared']:.4f} >= 0.95, ros audit {ros.verdict}")
    assert ok


def test_criterion_7_bounds(acceptance_log, ellipse_runs, ellipse_corrected, axi_run):
    runs = [(f"ellipse alpha={a}", SpeedLaw(1, 1, a), f.records) for a, (f, _, _) in ellipse_runs.items()]
    runs.append(("ellipse corrected", SpeedLaw(1, 1, 1.0), ellipse_corrected[0].records))
    runs.append(("ellipsoid k=2", SpeedLaw(2, 2, 1.0), axi_run[0].records))
    bad = []
    for name, law, recs in runs:
        if audit_pinching(recs, slack=1e-2).verdict != PASS:
            bad.append(f"{name} pinching")
        if audit_envelopes(recs, law).verdict != PASS:
            bad.append(f"{name} envelopes")
    env = audit_envelopes(axi_run[0].records, SpeedLaw(2, 2, 1.0))
    floor = env.details.get("E2_min_floor", 0.0)
    ok = not bad and floor > 0
    record(acceptance_log, 7, ok, f"{len(runs)} runs, failing={bad}, min E_2 floor {floor:.3f} > 0")
    assert ok


def test_criterion_8_negative_controls(acceptance_log, ellipse_runs, capsys):
    reversed_verdict = audit_monotone(ellipse_runs[1.0][0].records[::-1]).verdict
    code = main(["verify", "algebra", "--seed", str(SEED), "--inject-sign-error"])
    capsys.readouterr()
    E = cb.ellipse(5.0, 1.0, 128)
    cfg = FlowConfig(SpeedLaw(1, 1, 1.0), t_end=1.0, dt_init=0.5, max_step_retries=3)
    cause = None
    try:
        step(FlowState.initial(E, cfg), cfg)
    except StepFailure as exc:
        cause = exc.cause
    ok = reversed_verdict == FAIL and code != 0 and isinstance(cause, ConvexityLossError)
    record(acceptance_log, 8, ok, f"reversed monotone {reversed_verdict}, sign-error verify exit {code}, "
                                  f"oversized dt -> {type(cause).__name__}: {cause}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
