"""Explicit integration of du/dt = -sigma + h(t) for the support function.

In Gauss-map form the normal velocity of the boundary point with normal z is
the time derivative of u(z), so the flow is a scalar fully nonlinear parabolic
equation on the parameter sphere.  Time stepping is Heun (RK2) with
step-doubling error control and a parabolic step-size ceiling.
"""
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import body as cb
from .algebra import SpeedLaw, esp_table, speed_radii_grad
from .errors import ConvexityLossError, DomainError, NumericalError, StepFailure


@dataclass(frozen=True)
class FlowConfig:
    law: SpeedLaw
    t_end: float
    dt_init: float = 1e-5
    dt_safety: float = 0.9
    roundness_stop: float = 0.0
    volume_correct: bool = False
    max_step_retries: int = 30
    snapshot_stride: int = 10
    error_tol: float = 1e-7
    fixed_dt: bool = False
    recenter_ratio: float = 0.2
    max_steps: int = 50_000_000

    def __post_init__(self):
        if not self.t_end > 0:
            raise DomainError("t_end > 0 required")
        if not self.dt_init > 0:
            raise DomainError("dt_init > 0 required")
        if not 0 < self.dt_safety <= 1:
            raise DomainError("dt_safety must lie in (0, 1]")
        if self.max_step_retries < 1:
            raise DomainError("max_step_retries >= 1 required")
        if self.snapshot_stride < 1:
            raise DomainError("snapshot_stride >= 1 required")
        if self.roundness_stop < 0:
            raise DomainError("roundness_stop must be >= 0")


@dataclass(frozen=True, eq=False)
class FlowState:
    body: cb.SupportField
    t: float
    h: float
    dt: float
    step_count: int
    vol0: float

    @classmethod
    def initial(cls, body, config):
        return cls(body, 0.0, mean_speed(body, config.law), config.dt_init, 0, cb.volume(body))


@dataclass(frozen=True, eq=False)
class StepOutcome:
    state: FlowState
    dt_taken: float
    retries: int
    error_estimate: float
    recentered: bool = False


def _check_backend(body, law):
    if body.n != law.n:
        raise DomainError(f"law has n={law.n} but the {body.backend.value} backend has n={body.n}")


def node_speed(r, law):
    """(sigma, E_n(r)) at every node from the radii array (N, n); radii assumed positive."""
    n, k = law.n, law.k
    if n == 1:
        mu = r[:, 0]
        ek = 1.0 / mu
    elif n == 2:
        mu = r[:, 0] * r[:, 1]
        ek = (r[:, 0] + r[:, 1]) / mu if k == 1 else 1.0 / mu
    else:
        e = esp_table(r, n)
        mu = e[:, n]
        ek = e[:, n - k] / mu
    return (ek if law.alpha == 1.0 else ek ** law.alpha), mu


def _velocity(u, grid, law):
    """(-sigma + h, h) at the support values u; raises on convexity loss."""
    r = grid.radii(u)
    cb.check_radii(r)
    sigma, mu = node_speed(r, law)
    wmu = grid.weights * mu
    h = float(np.dot(wmu, sigma) / np.sum(wmu))
    return h - sigma, h


def mean_speed(body, law):
    """h = (int sigma dmu) / A with dmu = E_n(r) dz on the parameter sphere."""
    _check_backend(body, law)
    return _velocity(body.u, body.grid, law)[1]


def _diffusion(r, sigma, law):
    """Per-node sum over i of -d sigma / d r_i (the diffusion coefficient in u)."""
    n, k, alpha = law.n, law.k, law.alpha
    if n == 1 or k == n:
        # sigma = prod(r)**-alpha: -d sigma / d r_i = alpha sigma / r_i
        return alpha * sigma * np.sum(1.0 / r, axis=1)
    if n == 2:
        # k = 1: sigma = H**alpha with H = 1/r_1 + 1/r_2
        inv = 1.0 / r
        H = inv.sum(axis=1)
        return alpha * sigma / H * np.sum(inv * inv, axis=1)
    return np.sum(-speed_radii_grad(r, law), axis=1)


def stability_ceiling(body, law, safety, r=None, sigma=None):
    """Largest explicit step allowed by the linearised diffusion of sigma in u.

    sigma responds to the second derivatives of u with coefficient
    -d sigma / d r_i; Heun is stable for dt * rate <= 2.
    """
    if r is None:
        r = cb.radii(body).r
    if sigma is None:
        sigma = node_speed(r, law)[0]
    diffusion = float(np.max(_diffusion(r, sigma, law)))
    return safety * 2.0 / (body.grid.max_wavenumber_sq * diffusion)


def _heun(u, dt, grid, law, k1=None):
    if k1 is None:
        k1 = _velocity(u, grid, law)[0]
    k2 = _velocity(u + dt * k1, grid, law)[0]
    return u + 0.5 * dt * (k1 + k2)


def volume_correction(body, vol0, tol=1e-15, max_iter=60):
    """Constant c with Vol(u + c) = vol0, by Newton on the exact discrete polynomial."""
    a = cb.steiner_coefficients(body)
    poly = np.polynomial.Polynomial(a)
    dpoly = poly.deriv()
    c = 0.0
    for _ in range(max_iter):
        delta = (poly(c) - vol0) / dpoly(c)
        c -= delta
        if abs(delta) <= tol * max(1.0, float(np.max(np.abs(body.u)))):
            return c
    raise NumericalError("volume correction did not converge", best=c)


def step(state, config):
    """Advance by one accepted step, halving dt on failure up to max_step_retries times."""
    law = config.law
    body = state.body
    _check_backend(body, law)
    grid = body.grid
    u = body.u
    dt = min(state.dt, config.t_end - state.t) if config.t_end > state.t else state.dt
    tol = config.error_tol * float(np.max(np.abs(u)))
    k1 = _velocity(u, grid, law)[0]
    cause = None
    for attempt in range(config.max_step_retries + 1):
        try:
            if config.fixed_dt:
                new_u = _heun(u, dt, grid, law, k1)
                err = 0.0
            else:
                full = _heun(u, dt, grid, law, k1)
                half = _heun(u, 0.5 * dt, grid, law, k1)
                new_u = _heun(half, 0.5 * dt, grid, law)
                err = float(np.max(np.abs(full - new_u)))
            new_body = body.with_u(new_u)
            new_r = grid.radii(new_body.u)
            cb.check_radii(new_r)
            if err > tol:
                raise NumericalError(f"step-doubling error {err:.3e} above tolerance {tol:.3e}")
        except (ConvexityLossError, NumericalError) as exc:
            cause = exc
            dt *= 0.5
            continue
        break
    else:
        raise StepFailure(f"step failed after {config.max_step_retries} retries at t={state.t:.6g}: {cause}",
                          state=state, cause=cause)

    if config.volume_correct:
        new_body = new_body.with_u(new_body.u + volume_correction(new_body, state.vol0))

    recentered = False
    if new_body.u.min() < config.recenter_ratio * new_body.u.max():
        new_body = cb.recenter(new_body)
        recentered = True
    if config.volume_correct or recentered:
        new_r = grid.radii(new_body.u)
        cb.check_radii(new_r)

    sigma, mu = node_speed(new_r, law)
    if config.fixed_dt:
        next_dt = dt
    else:
        growth = 1.5 if err == 0 else min(1.5, 0.9 * (tol / err) ** (1.0 / 3.0))
        next_dt = min(dt * growth, stability_ceiling(new_body, law, config.dt_safety, new_r, sigma))
    wmu = grid.weights * mu
    h = float(np.dot(wmu, sigma) / np.sum(wmu))
    new_state = FlowState(new_body, state.t + dt, h, next_dt, state.step_count + 1, state.vol0)
    return StepOutcome(new_state, dt, attempt, err, recentered)


def volume_drift(state):
    return (cb.volume(state.body) - state.vol0) / state.vol0


@dataclass
class Trajectory:
    config: FlowConfig
    states: List[FlowState] = field(default_factory=list)
    records: list = field(default_factory=list)
    failure: Optional[StepFailure] = None
    stop_reason: str = ""

    def __iter__(self):
        return iter(zip(self.states, self.records))

    def __len__(self):
        return len(self.records)

    @property
    def final_state(self):
        return self.states[-1]


def run(initial, config, progress=None):
    """Integrate from ``initial`` until t_end, roundness, or step failure.

    A diagnostics record is taken every ``snapshot_stride`` accepted steps and
    at both ends; the roundness stop is tested at those records.
    """
    from .diagnostics import snapshot

    _check_backend(initial, config.law)
    state = FlowState.initial(initial, config)
    traj = Trajectory(config)

    def record(s):
        rec = snapshot(s, config.law)
        traj.states.append(s)
        traj.records.append(rec)
        if progress is not None:
            progress(s, rec)
        return rec

    rec = record(state)
    since = 0
    while True:
        if state.t >= config.t_end * (1 - 1e-14):
            traj.stop_reason = "t_end"
            break
        if config.roundness_stop > 0 and rec.R_plus - rec.R_minus < config.roundness_stop:
            traj.stop_reason = "roundness"
            break
        if state.step_count >= config.max_steps:
            traj.stop_reason = "max_steps"
            break
        try:
            state = step(state, config).state
        except StepFailure as exc:
            traj.failure = exc
            traj.stop_reason = "step_failure"
            break
        since += 1
        at_end = state.t >= config.t_end * (1 - 1e-14)
        if since >= config.snapshot_stride or at_end:
            rec = record(state)
            since = 0
    if traj.states[-1] is not state:
        record(state)
    return traj


def with_law(config, **changes):
    """Copy of ``config`` with fields of its law replaced."""
    return replace(config, law=replace(config.law, **changes))
