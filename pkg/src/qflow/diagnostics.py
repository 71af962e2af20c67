"""Per-record measurements along a flow and audits of the recorded series.

Every audit is a pure function of the list of ``DiagnosticsRecord`` rows (and a
few scalar parameters), so audits recomputed from a stored ``series.csv``
reproduce the ones made right after the run.
"""
from dataclasses import asdict, dataclass, field, fields
from math import comb
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import body as cb
from .algebra import esp_table
from .errors import InsufficientDataError
from .flow import node_speed

PASS, FAIL, NOT_APPLICABLE = "pass", "fail", "not_applicable"


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    dt: float
    volume: float
    area: float
    mixed_volumes: tuple
    h: float
    sigma_min: float
    sigma_max: float
    lambda_min: float
    lambda_max: float
    l2_deviation: float
    iso_ratio: float
    curvature_integral_km1: float
    balance_rhs: float
    R_minus: float
    R_plus: float
    hausdorff_ball: float
    minkowski_res_0: float
    ros_deficit: float
    volume_drift: float
    ros_l1: float
    step: int

    @property
    def n(self):
        return len(self.mixed_volumes) - 2

    def columns(self):
        """Flat (name, value) pairs in CSV order; mixed volumes become V_0..V_{n+1}."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "mixed_volumes":
                out.extend((f"V_{i}", x) for i, x in enumerate(v))
            else:
                out.append((f.name, v))
        return out

    @classmethod
    def from_columns(cls, row):
        """Inverse of ``columns`` for a dict of column name to parsed value."""
        n_mv = sum(1 for key in row if key.startswith("V_"))
        kwargs = {}
        for f in fields(cls):
            if f.name == "mixed_volumes":
                kwargs[f.name] = tuple(float(row[f"V_{i}"]) for i in range(n_mv))
            elif f.name == "step":
                kwargs[f.name] = int(row[f.name])
            else:
                kwargs[f.name] = float(row[f.name])
        return cls(**kwargs)


def snapshot(state, law):
    """Fill a DiagnosticsRecord for ``state``; pure."""
    body = state.body
    grid = body.grid
    n, k, alpha = law.n, law.k, law.alpha
    r = cb.radii(body).r
    e = esp_table(r, n)
    mu = e[:, n]
    sigma, _ = node_speed(r, law)
    A = grid.integrate(mu)
    h = grid.integrate(sigma * mu) / A
    ek = e[:, n - k] / mu
    V = np.empty(n + 2)
    for j in range(n + 1):
        V[n - j] = grid.integrate(e[:, n - j]) / ((n + 1) * comb(n, j))
    vol = grid.integrate(body.u * mu) / (n + 1)
    V[n + 1] = vol
    r_minus, r_plus, _, _ = cb.radii_bounds(body)
    return DiagnosticsRecord(
        t=float(state.t),
        dt=float(state.dt),
        volume=vol,
        area=A,
        mixed_volumes=tuple(float(x) for x in V),
        h=float(h),
        sigma_min=float(sigma.min()),
        sigma_max=float(sigma.max()),
        lambda_min=float(1.0 / r.max()),
        lambda_max=float(1.0 / r.min()),
        l2_deviation=grid.integrate((sigma - h) ** 2 * mu),
        iso_ratio=float(V[n - k + 1] ** (n + 1) / vol ** (n - k + 1)),
        curvature_integral_km1=grid.integrate(e[:, n - k + 1]),
        balance_rhs=-k * grid.integrate((sigma - h) * (ek - h ** (1.0 / alpha)) * mu),
        R_minus=r_minus,
        R_plus=r_plus,
        hausdorff_ball=cb.hausdorff_to_ball(body),
        minkowski_res_0=cb.minkowski_residual(body, 0),
        ros_deficit=cb.ros_deficit(body),
        volume_drift=(vol - state.vol0) / state.vol0,
        ros_l1=grid.integrate(np.abs(sigma ** -0.5 - h ** -0.5) * mu),
        step=int(state.step_count),
    )


@dataclass
class AuditReport:
    name: str
    verdict: str
    worst: float = 0.0
    location: Optional[int] = None
    details: dict = field(default_factory=dict)
    note: str = ""

    @property
    def passed(self):
        return self.verdict == PASS

    @property
    def failed(self):
        return self.verdict == FAIL

    def to_dict(self):
        return asdict(self)


def _series(records, name):
    return np.array([getattr(r, name) for r in records], dtype=float)


def _first_violation(increments, allowed):
    excess = increments - allowed
    bad = np.nonzero(excess > 0)[0]
    worst = float(excess.max()) if excess.size else 0.0
    return (int(bad[0]) + 1 if bad.size else None), worst


def audit_monotone(records, eps_disc=None, rel_slack=1e-9):
    """Non-increase of int E_{k-1} dmu and of the isoperimetric ratio.

    ``eps_disc`` maps a field name to its discretisation allowance (see
    ``discretization_allowance``); missing fields get zero allowance.
    """
    eps_disc = eps_disc or {}
    if len(records) < 2:
        raise InsufficientDataError("monotonicity audit needs at least 2 records")
    details = {}
    first, worst = None, -np.inf
    for name in ("curvature_integral_km1", "iso_ratio"):
        q = _series(records, name)
        allowed = rel_slack * np.abs(q[:-1]) + eps_disc.get(name, 0.0)
        loc, w = _first_violation(np.diff(q), allowed)
        details[name] = {"first_violation": loc, "worst_excess": w, "eps_disc": eps_disc.get(name, 0.0),
                         "total_change": float(q[-1] - q[0])}
        worst = max(worst, w)
        if loc is not None and (first is None or loc < first):
            first = loc
    verdict = FAIL if first is not None else PASS
    return AuditReport("monotone", verdict, worst, first, details)


def discretization_allowance(fine, coarse, names=("curvature_integral_km1", "iso_ratio")):
    """Largest gap between a run and its half-resolution twin, per field.

    The coarse series is compared at the fine record times through a cubic
    spline, so interpolation error stays well below the time-stepping error.
    """
    tf = _series(fine, "t")
    tc = _series(coarse, "t")
    out = {}
    for name in names:
        qs = _series(coarse, name)
        qc = CubicSpline(tc, qs)(tf) if tc.size >= 4 else np.interp(tf, tc, qs)
        mask = tf <= tc[-1]
        out[name] = float(np.max(np.abs(_series(fine, name)[mask] - qc[mask]))) if mask.any() else 0.0
    return out


def _simpson_3pt(t, f):
    """Simpson integral of f over [t[i-1], t[i+1]] for every interior i (non-uniform spacing)."""
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    w = h0 + h1
    return w / 6 * ((2 - h1 / h0) * f[:-2] + w * w / (h0 * h1) * f[1:-1] + (2 - h0 / h1) * f[2:])


def audit_balance(records, tol=0.05, min_l2=1e-10, skip=1):
    """Change of int E_{k-1} dmu against the time integral of the recorded balance term.

    Compared over each pair of record intervals [t_{i-1}, t_{i+1}] (Simpson in time,
    so coarse record spacing does not bias the check), at interior records whose L2
    deviation exceeds ``min_l2``; the first ``skip`` records are treated as the
    initial transient.  The location is the centre record of the worst window.
    """
    if len(records) < 3:
        raise InsufficientDataError("balance audit needs at least 3 records")
    t = _series(records, "t")
    q = _series(records, "curvature_integral_km1")
    rhs = _series(records, "balance_rhs")
    l2 = _series(records, "l2_deviation")[1:-1]
    change = q[2:] - q[:-2]
    predicted = _simpson_3pt(t, rhs)
    mask = l2 > min_l2
    mask[:max(skip - 1, 0)] = False
    if not mask.any():
        return AuditReport("balance", NOT_APPLICABLE, note="no records above the L2 floor")
    mismatch = np.abs(change - predicted)[mask] / np.abs(predicted[mask])
    idx = np.nonzero(mask)[0] + 1
    worst_i = int(np.argmax(mismatch))
    verdict = FAIL if mismatch[worst_i] > tol else PASS
    details = {"checked": int(mask.sum()), "max_mismatch": float(mismatch.max()),
               "median_mismatch": float(np.median(mismatch)), "tol": tol,
               "failing_windows": int((mismatch > tol).sum())}
    return AuditReport("balance", verdict, float(mismatch.max()), int(records[idx[worst_i]].step), details)


def balance_refinement_order(coarse_report, fine_report, ratio=2.0):
    """Observed order of the balance mismatch between two dt-refined runs."""
    a = coarse_report.details["max_mismatch"]
    b = fine_report.details["max_mismatch"]
    return float(np.log(a / b) / np.log(ratio))


def audit_pinching(records, slack=1e-2):
    """lambda_min(t) >= (lambda_min(0)^-1 + h* t)^-1 with h* the running max of h."""
    lam = _series(records, "lambda_min")
    t = _series(records, "t")
    hstar = np.maximum.accumulate(_series(records, "h"))
    bound = 1.0 / (1.0 / lam[0] + hstar * t) * (1.0 - slack)
    excess = bound - lam
    bad = np.nonzero(excess > 0)[0]
    loc = int(records[bad[0]].step) if bad.size else None
    margin = float(np.min(lam / bound))
    return AuditReport("pinching", FAIL if bad.size else PASS, float(excess.max()), loc,
                       {"min_ratio_to_bound": margin})


def _fit_window(g, floor):
    """Indices of the final decade of a decaying positive series above ``floor``."""
    ok = np.nonzero(g > floor)[0]
    if ok.size < 3:
        return None
    last = ok[-1]
    above = np.nonzero(g[:last + 1] >= 10.0 * g[last])[0]
    start = above[-1] if above.size else ok[0]
    window = np.arange(start, last + 1)
    window = window[g[window] > floor]
    return window if window.size >= 3 else None


def fit_exponential(t, g):
    """Least-squares fit of log g = a + s t; returns (slope, r_squared)."""
    y = np.log(g)
    s, a = np.polyfit(t, y, 1)
    resid = y - (a + s * t)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(s), float(r2)


def audit_decay(records, roundness_tol, drift_budget=1e-4, l2_tol=1e-6, radius_tol=1e-3, r2_min=0.95):
    """Convergence to the volume-matched ball: L2 deviation, exponential rate, limit.

    Returns NOT_APPLICABLE when the final record is not near round
    (hausdorff_ball above 10 * roundness_tol).
    """
    last = records[-1]
    first = records[0]
    n = last.n
    if len(records) < 2 or last.hausdorff_ball > 10.0 * roundness_tol:
        return AuditReport("decay", NOT_APPLICABLE, note="trajectory did not reach near-roundness")
    checks = {}
    l2_0, l2_f = first.l2_deviation, last.l2_deviation
    checks["l2_final_below_tol"] = l2_f < l2_tol
    checks["l2_decreased"] = l2_f < l2_0 or l2_0 <= l2_tol * 1e-6

    gap = _series(records, "R_plus") - _series(records, "R_minus")
    t = _series(records, "t")
    scale = max(last.R_plus, 1e-300)
    window = _fit_window(gap, 1e-11 * scale)
    rate = {"slope": None, "r_squared": None, "window": None}
    if window is not None:
        s, r2 = fit_exponential(t[window], gap[window])
        rate = {"slope": s, "r_squared": r2, "window": [int(records[window[0]].step),
                                                         int(records[window[-1]].step)]}
        checks["exponential_rate"] = s < 0 and r2 >= r2_min

    vol0 = first.volume
    drift = abs(last.volume - vol0) / vol0
    checks["volume_conserved"] = drift <= drift_budget
    checks["hausdorff_round"] = last.hausdorff_ball < roundness_tol or last.hausdorff_ball == 0.0
    kappa = cb.unit_ball_volume(n + 1)
    r_target = (vol0 / kappa) ** (1.0 / (n + 1))
    r_limit = 0.5 * (last.R_plus + last.R_minus)
    checks["limit_radius"] = abs(r_limit - r_target) <= radius_tol
    failed = [name for name, ok in checks.items() if not ok]
    details = {"checks": checks, "rate": rate, "final_l2": l2_f, "initial_l2": l2_0, "volume_drift": drift,
               "limit_radius": r_limit, "volume_matched_radius": r_target,
               "final_gap": float(gap[-1]), "final_hausdorff": last.hausdorff_ball}
    note = "" if window is not None else "radius gap identically at round-off; rate fit not applicable"
    note += (" liminf and limit cases share the same decreasing-tail check" if not note else "")
    return AuditReport("decay", FAIL if failed else PASS, float(abs(r_limit - r_target)), int(last.step),
                       details, note.strip())


def audit_ros_sequence(records, law, roundness_tol, final_tol=1e-4, positivity_tol=1e-6, rel_slack=1e-9,
                       eps_disc=0.0):
    """Ros deficit and int |E_2^(-1/2) - h^(-1/2)| dmu along an n=2, k=2 run."""
    if (law.n, law.k) != (2, 2):
        return AuditReport("ros_sequence", NOT_APPLICABLE, note=f"needs n=2, k=2; got n={law.n}, k={law.k}")
    ros = _series(records, "ros_deficit")
    l1 = _series(records, "ros_l1")
    neg = np.nonzero(ros < -positivity_tol)[0]
    details = {"min_ros_deficit": float(ros.min()), "final_ros_deficit": float(ros[-1]),
               "final_ros_l1": float(l1[-1])}
    checks = {"positivity": neg.size == 0}
    converged = records[-1].hausdorff_ball <= 10.0 * roundness_tol
    if converged:
        for name, q in (("ros_deficit", ros), ("ros_l1", l1)):
            window = _fit_window(np.abs(q), 1e-12 * max(np.abs(q).max(), 1e-300))
            if window is None:
                checks[f"{name}_tail_decreasing"] = bool(np.all(np.abs(q) < final_tol))
                continue
            inc = np.diff(q[window])
            checks[f"{name}_tail_decreasing"] = bool(np.all(inc <= rel_slack * np.abs(q[window][:-1]) + eps_disc))
        # informational: how far the recorded tail got, not part of the verdict
        details["below_final_tol"] = {"ros_deficit": bool(abs(ros[-1]) < final_tol),
                                      "ros_l1": bool(abs(l1[-1]) < final_tol), "final_tol": final_tol}
    details["checks"] = checks
    failed = [k for k, ok in checks.items() if not ok]
    loc = int(records[neg[0]].step) if neg.size else None
    note = "" if converged else "decay clause not applicable: run not converged"
    return AuditReport("ros_sequence", FAIL if failed else PASS, float(max(0.0, -ros.min())), loc, details, note)


def audit_envelopes(records, law, sigma_factor=1.25, lambda_factor=1.25):
    """Measured witnesses of the speed, curvature and h bounds.

    sigma_max stays below sigma_factor * max(sigma_max(0), h(0)); h stays in
    [h(0)/2, 2 h(0)]; lambda_max stays below the curvature envelope (for the
    scalar-curvature speed the explicit maximum-principle bound built from the
    measured sup sigma and inf h, otherwise lambda_factor * lambda_max(0)).
    For k = 2 the minimum of E_2 is reported as the measured lower floor.
    """
    s_max = _series(records, "sigma_max")
    h = _series(records, "h")
    lam_max = _series(records, "lambda_max")
    f = records[0]
    n = law.n
    sigma_env = sigma_factor * max(f.sigma_max, f.h)
    if law.k == 2 and law.alpha == 1.0 and n >= 2:
        c1, beta = float(s_max.max()), float(h.min())
        lam_env = max(n * f.lambda_max, n * c1 * np.sqrt((n - 1) * n / beta))
    else:
        lam_env = lambda_factor * f.lambda_max
    checks = {
        "sigma_max": bool(np.all(s_max <= sigma_env)),
        "h_lower": bool(np.all(h >= 0.5 * f.h)),
        "h_upper": bool(np.all(h <= 2.0 * f.h)),
        "lambda_max": bool(np.all(lam_max <= lam_env)),
    }
    details = {"checks": checks, "sigma_envelope": sigma_env, "sigma_max_observed": float(s_max.max()),
               "h_range": [float(h.min()), float(h.max())], "h_initial": f.h, "lambda_envelope": float(lam_env),
               "lambda_max_observed": float(lam_max.max())}
    if law.k == 2:
        ek_min = _series(records, "sigma_min") ** (1.0 / law.alpha)
        floor = float(ek_min.min())
        details["E2_min_floor"] = floor
        checks["E2_floor_positive"] = bool(floor > 0 and floor >= 0.5 * min(ek_min[0], ek_min[-1]))
    failed = [k for k, ok in checks.items() if not ok]
    return AuditReport("envelopes", FAIL if failed else PASS, 0.0, None, details)


def run_audits(records, law, roundness_tol, eps_disc=None, drift_budget=1e-4):
    """All applicable audits keyed by name."""
    reports = [audit_monotone(records, eps_disc), audit_pinching(records), audit_envelopes(records, law),
               audit_decay(records, roundness_tol, drift_budget),
               audit_ros_sequence(records, law, roundness_tol)]
    try:
        reports.append(audit_balance(records))
    except InsufficientDataError as exc:
        reports.append(AuditReport("balance", NOT_APPLICABLE, note=str(exc)))
    return {r.name: r for r in reports}
