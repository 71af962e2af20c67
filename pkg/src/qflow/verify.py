"""Randomised identity and inequality suites behind ``qflow verify``.

Each suite returns a list of ``Check`` rows; a suite passes when every row does.
"""
import time
from itertools import combinations
from typing import NamedTuple

import numpy as np
from scipy.special import ellipe

from . import body as cb
from .algebra import SpeedLaw, identity_residuals, speed_grad

SUITES = ("algebra", "body", "static-inequalities")
ROUNDOFF_FLOOR = 1e-13


class Check(NamedTuple):
    name: str
    ok: bool
    value: float
    tol: float
    note: str = ""

    def line(self):
        tag = "PASS" if self.ok else "FAIL"
        extra = f"  ({self.note})" if self.note else ""
        return f"{tag}  {self.name:<44s} {self.value:.3e} <= {self.tol:.1e}{extra}"


def new_seed():
    return int(np.random.SeedSequence().entropy % 2**32)


def _flipped_grad(lam, law):
    return -speed_grad(lam, law)


def suite_algebra(seed, samples=100_000, nmax=6, alphas=(0.5, 1.0, 2.0), inject_sign_error=False, tol=1e-10):
    """Curvature identities on log-uniform lambda in (1e-3, 1e3)^n for every n <= nmax, k <= n."""
    rng = np.random.default_rng(seed)
    grad = _flipped_grad if inject_sign_error else None
    checks = []
    for n in range(1, nmax + 1):
        lam = 10.0 ** rng.uniform(-3.0, 3.0, size=(samples, n))
        worst = {"product_rule": 0.0, "product_lower": 0.0, "maclaurin": 0.0, "euler": 0.0}
        for k in range(1, n + 1):
            for alpha in alphas:
                res = identity_residuals(lam, SpeedLaw(n, k, alpha), grad=grad)
                for name in ("product_rule", "product_lower", "maclaurin") if alpha == 1.0 else ():
                    worst[name] = max(worst[name], float(np.max(getattr(res, name))))
                worst["euler"] = max(worst["euler"], float(np.max(res.euler)))
        for name, w in worst.items():
            checks.append(Check(f"{name} n={n}", w <= tol, w, tol))
    return checks


def _order(errors, Ns):
    out = []
    for (e0, n0), (e1, n1) in zip(zip(errors, Ns), zip(errors[1:], Ns[1:])):
        if e1 <= ROUNDOFF_FLOOR or e0 <= ROUNDOFF_FLOOR:
            out.append("floor")
        else:
            out.append(f"{np.log(e0 / e1) / np.log(n1 / n0):.1f}")
    return out


def refinement_table(Ns=(16, 32, 64, 128, 256)):
    """Relative errors of closed-form geometric quantities on refined grids."""
    a, b = 2.0, 1.0
    perim = 4.0 * a * ellipe(1.0 - (b / a) ** 2)
    ea, ec = 1.0, 1.6
    ecc = np.sqrt(1.0 - ea * ea / (ec * ec))
    spheroid_area = 2.0 * np.pi * ea * ea * (1.0 + ec / (ea * ecc) * np.arcsin(ecc))
    spheroid_vol = 4.0 / 3.0 * np.pi * ea * ea * ec
    rows = {"ellipse(2,1) perimeter": [], "ellipse(2,1) area": [],
            "ellipsoid_rev(1,1.6) area": [], "ellipsoid_rev(1,1.6) volume": []}
    for N in Ns:
        E = cb.ellipse(a, b, N)
        S = cb.ellipsoid_rev(ea, ec, N)
        rows["ellipse(2,1) perimeter"].append(abs(cb.area(E) - perim) / perim)
        rows["ellipse(2,1) area"].append(abs(cb.volume(E) - np.pi * a * b) / (np.pi * a * b))
        rows["ellipsoid_rev(1,1.6) area"].append(abs(cb.area(S) - spheroid_area) / spheroid_area)
        rows["ellipsoid_rev(1,1.6) volume"].append(abs(cb.volume(S) - spheroid_vol) / spheroid_vol)
    return {name: (errs, _order(errs, Ns)) for name, errs in rows.items()}


def random_bodies(seed, count=50):
    """Alternating CIRCLE (N=128) and AXISYMMETRIC (N=64) random_trig bodies."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        backend = cb.Backend.CIRCLE if i % 2 == 0 else cb.Backend.AXISYMMETRIC
        N = 128 if backend is cb.Backend.CIRCLE else 64
        sub = int(rng.integers(2**31))
        out.append(cb.random_trig(sub, int(rng.integers(2, 7)), 0.05, N, backend))
    return out


def suite_body(seed, count=50, Ns=(64, 128, 256), printer=None):
    checks = []
    circle = cb.sphere(1.0, 128, cb.Backend.CIRCLE)
    checks.append(Check("unit circle perimeter (N=128)", *_rel(cb.area(circle), 2 * np.pi, 1e-10)))
    checks.append(Check("unit circle area (N=128)", *_rel(cb.volume(circle), np.pi, 1e-10)))
    ball = cb.sphere(1.0, 256, cb.Backend.AXISYMMETRIC)
    checks.append(Check("unit sphere area (N=256)", *_rel(cb.area(ball), 4 * np.pi, 1e-6)))
    checks.append(Check("unit sphere volume (N=256)", *_rel(cb.volume(ball), 4 * np.pi / 3, 1e-6)))

    table = refinement_table(tuple(sorted(set((16, 32) + tuple(Ns)))))
    for name, (errs, orders) in table.items():
        if printer:
            printer(f"      {name}: errors " + " ".join(f"{e:.2e}" for e in errs) + "  orders " + " ".join(orders))
        worst = max(errs[-len(Ns):])
        checks.append(Check(f"{name} N in {list(Ns)}", worst <= 1e-10, worst, 1e-10, "spectral; orders printed"))

    worst_mink = 0.0
    for body in random_bodies(seed, count):
        A = cb.area(body)
        for l in range(body.n):
            worst_mink = max(worst_mink, abs(cb.minkowski_residual(body, l)) / A)
    checks.append(Check(f"Minkowski residual / A ({count} random bodies)", worst_mink <= 1e-8, worst_mink, 1e-8))

    E = cb.ellipse(2.0, 1.0, 256)
    worst_st = 0.0
    for t in (0.1, 0.5, 1.0, 2.0):
        direct = cb.steiner_volume(E, t)
        worst_st = max(worst_st, abs(direct - cb.steiner_polynomial(E, t)) / direct)
    checks.append(Check("Steiner polynomial cross-check (ellipse)", worst_st <= 1e-8, worst_st, 1e-8))
    return checks


def _rel(value, exact, tol):
    err = abs(value - exact) / abs(exact)
    return err <= tol, err, tol


def test_bodies(seed, count=20):
    """Named bodies for the inequality suite; balls flagged for the equality case."""
    named = [("circle", cb.sphere(1.3, 128), True),
             ("sphere", cb.sphere(0.7, 128, cb.Backend.AXISYMMETRIC), True),
             ("ellipse(2,1)", cb.ellipse(2.0, 1.0, 256), False),
             ("ellipse(1,1.05)", cb.ellipse(1.0, 1.05, 128), False),
             ("ellipsoid_rev(1,1.6)", cb.ellipsoid_rev(1.0, 1.6, 256), False),
             ("ellipsoid_rev(1.4,0.5)", cb.ellipsoid_rev(1.4, 0.5, 128), False)]
    named += [(f"random_trig #{i}", b, False) for i, b in enumerate(random_bodies(seed, count))]
    return named


def suite_static_inequalities(seed, af_tol=1e-8, ros_tol=1e-6, count=20):
    worst_af, worst_ros, ball_af, ball_ros = 0.0, 0.0, 0.0, 0.0
    for name, body, is_ball in test_bodies(seed, count):
        n = body.n
        for m, l in combinations(range(1, n + 2), 2):
            d = cb.af_deficit(body, m, l)
            worst_af = max(worst_af, -d)
            if is_ball:
                ball_af = max(ball_af, abs(d))
        d = cb.ros_deficit(body)
        worst_ros = max(worst_ros, -d)
        if is_ball:
            ball_ros = max(ball_ros, abs(d))
    return [Check("AF deficit >= -tol (all bodies)", worst_af <= af_tol, worst_af, af_tol),
            Check("Ros deficit >= -tol (all bodies)", worst_ros <= ros_tol, worst_ros, ros_tol),
            Check("AF deficit = 0 on balls", ball_af <= af_tol, ball_af, af_tol),
            Check("Ros deficit = 0 on balls", ball_ros <= ros_tol, ball_ros, ros_tol)]


def run_suite(name, seed, inject_sign_error=False, printer=print):
    """Run one suite (or ``all``) and print one line per check; returns True iff all pass."""
    names = SUITES if name == "all" else (name,)
    ok = True
    for s in names:
        t0 = time.perf_counter()
        printer(f"[{s}] seed={seed}")
        if s == "algebra":
            checks = suite_algebra(seed, inject_sign_error=inject_sign_error)
        elif s == "body":
            checks = suite_body(seed, printer=printer)
        elif s == "static-inequalities":
            checks = suite_static_inequalities(seed)
        else:
            raise ValueError(f"unknown suite {s!r}")
        for c in checks:
            printer("  " + c.line())
        passed = all(c.ok for c in checks)
        printer(f"[{s}] {'PASS' if passed else 'FAIL'} in {time.perf_counter() - t0:.1f}s")
        ok &= passed
    return ok
