from math import comb, pi

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qflow import body as cb
from qflow.algebra import SpeedLaw
from qflow.body import Backend
from qflow.errors import ConvexityLossError, DomainError, StepFailure
from qflow.flow import (FlowConfig, FlowState, mean_speed, run, stability_ceiling, step, volume_correction,
                        volume_drift, with_law)

CIRCLE, AXI = Backend.CIRCLE, Backend.AXISYMMETRIC
CURVE = SpeedLaw(1, 1, 1.0)


def full_support(body):
    """Support values about the original origin (undo recentring)."""
    return body.u + body.grid.normals @ body.origin_offset


@pytest.mark.parametrize("backend,law", [
    (CIRCLE, SpeedLaw(1, 1, 1.0)), (CIRCLE, SpeedLaw(1, 1, 0.5)), (CIRCLE, SpeedLaw(1, 1, 3.0)),
    (AXI, SpeedLaw(2, 1, 1.0)), (AXI, SpeedLaw(2, 2, 1.0)), (AXI, SpeedLaw(2, 2, 0.5)), (AXI, SpeedLaw(2, 1, 2.0)),
])
def test_sphere_is_stationary(backend, law):
    S = cb.sphere(1.3, 64, backend)
    cfg = FlowConfig(law, t_end=1.0, dt_init=1e-3)
    state = FlowState.initial(S, cfg)
    assert state.h == pytest.approx(law.sphere_speed(1.3), rel=1e-12)
    out = step(state, cfg)
    assert np.max(np.abs(out.state.body.u - S.u)) <= 1e-14


def test_sphere_trajectory_constant():
    cfg = FlowConfig(SpeedLaw(2, 2, 1.0), t_end=1.0, dt_init=1e-3, snapshot_stride=20)
    traj = run(cb.sphere(1.0, 32, AXI), cfg)
    assert traj.stop_reason == "t_end"
    assert traj.states[-1].t == pytest.approx(1.0)
    vols = [r.volume for r in traj.records]
    assert max(vols) - min(vols) <= 1e-14
    assert all(r.l2_deviation <= 1e-24 for r in traj.records)


def test_mean_speed_examples():
    E = cb.ellipse(2.0, 1.0, 256)
    assert mean_speed(E, CURVE) == pytest.approx(2 * pi / cb.area(E), rel=1e-12)
    B = cb.random_trig(4, 3, 0.1, 64, AXI)
    for k in (1, 2):
        V = cb.mixed_volumes(B)
        h = mean_speed(B, SpeedLaw(2, k, 1.0))
        assert h * cb.area(B) == pytest.approx(3 * comb(2, k) * V[2 - k], rel=1e-12)
    with pytest.raises(DomainError):
        mean_speed(E, SpeedLaw(2, 1, 1.0))


def test_single_step_area_change():
    E = cb.ellipse(2.0, 1.0, 256)
    cfg = FlowConfig(CURVE, t_end=1.0, dt_init=1e-4, fixed_dt=True)
    out = step(FlowState.initial(E, cfg), cfg)
    assert out.dt_taken == 1e-4
    assert abs(cb.volume(out.state.body) - cb.volume(E)) / cb.volume(E) <= 1e-8


def test_oversized_dt_probe():
    E = cb.ellipse(5.0, 1.0, 128)
    cfg = FlowConfig(CURVE, t_end=1.0, dt_init=0.5, max_step_retries=3)
    state = FlowState.initial(E, cfg)
    with pytest.raises(StepFailure) as info:
        step(state, cfg)
    assert isinstance(info.value.cause, ConvexityLossError)
    assert info.value.cause.node is not None
    assert info.value.state is state


def test_run_captures_step_failure():
    cfg = FlowConfig(CURVE, t_end=1.0, dt_init=0.5, max_step_retries=2, fixed_dt=True)
    traj = run(cb.ellipse(5.0, 1.0, 64), cfg)
    assert traj.stop_reason == "step_failure"
    assert isinstance(traj.failure.cause, ConvexityLossError)
    assert len(traj.records) == 1


def test_step_retries_then_succeeds():
    E = cb.ellipse(2.0, 1.0, 128)
    cfg = FlowConfig(CURVE, t_end=1.0, dt_init=0.05)
    out = step(FlowState.initial(E, cfg), cfg)
    assert out.retries > 0
    assert out.dt_taken == pytest.approx(0.05 * 0.5 ** out.retries)
    assert out.error_estimate <= 1e-7 * E.u.max()


def test_dt_respects_ceiling():
    E = cb.ellipse(2.0, 1.0, 128)
    cfg = FlowConfig(CURVE, t_end=1.0, dt_init=1e-6)
    state = FlowState.initial(E, cfg)
    for _ in range(60):
        state = step(state, cfg).state
        assert state.dt <= stability_ceiling(state.body, CURVE, cfg.dt_safety) * (1 + 1e-12)


def test_volume_correction():
    E = cb.ellipse(2.0, 1.0, 128)
    cfg = FlowConfig(CURVE, t_end=0.2, dt_init=1e-4, volume_correct=True, snapshot_stride=50)
    traj = run(E, cfg)
    assert max(abs(r.volume_drift) for r in traj.records) <= 1e-12
    assert volume_drift(traj.states[0]) == 0.0
    c = volume_correction(E.with_u(E.u * 1.01), cb.volume(E))
    assert cb.volume(E.with_u(E.u * 1.01 + c)) == pytest.approx(cb.volume(E), rel=1e-14)


def test_recentering():
    th = cb.get_grid(CIRCLE, 64).nodes
    B = cb.SupportField(CIRCLE, 1.0 + 0.9 * np.cos(th) + 0.05 * np.cos(2 * th))
    cfg = FlowConfig(CURVE, t_end=1.0, dt_init=1e-4)
    out = step(FlowState.initial(B, cfg), cfg)
    assert out.recentered
    assert out.state.body.u.min() > 0.2 * out.state.body.u.max()
    assert out.state.body.origin_offset[0] == pytest.approx(0.9, abs=0.01)


def test_records_at_both_ends():
    cfg = FlowConfig(CURVE, t_end=0.05, dt_init=1e-4, snapshot_stride=7)
    traj = run(cb.ellipse(1.5, 1.0, 64), cfg)
    steps = [r.step for r in traj.records]
    assert steps[0] == 0 and steps[-1] == traj.states[-1].step_count
    assert all(b - a <= 7 for a, b in zip(steps, steps[1:]))
    assert traj.records[-1].t == pytest.approx(0.05)


def test_roundness_stop():
    cfg = FlowConfig(CURVE, t_end=50.0, dt_init=1e-4, roundness_stop=1e-3, snapshot_stride=20)
    traj = run(cb.ellipse(1.2, 1.0, 64), cfg)
    assert traj.stop_reason == "roundness"
    assert traj.records[-1].R_plus - traj.records[-1].R_minus < 1e-3


def test_translation_equivariance():
    B = cb.random_trig(2, 3, 0.2, 64)
    q = np.array([0.15, -0.1, 0.0])
    cfg = FlowConfig(CURVE, t_end=0.1, dt_init=2e-4, fixed_dt=True)
    a = run(B, cfg).states[-1].body
    b = run(B.translated(q), cfg).states[-1].body
    shifted = full_support(a) + a.grid.normals @ q
    assert np.max(np.abs(full_support(b) - shifted)) <= 1e-8


@pytest.mark.parametrize("law", [SpeedLaw(1, 1, 1.0), SpeedLaw(1, 1, 2.0)])
def test_scaling_consistency(law):
    # c * Omega evolves like Omega with time stretched by c**(alpha k + 1)
    B = cb.random_trig(9, 3, 0.2, 64)
    c = 1.7
    s = c ** (law.degree + 1)
    cfg = FlowConfig(law, t_end=0.05, dt_init=2.5e-4, fixed_dt=True)
    a = run(B, cfg).states[-1].body
    cfg_c = FlowConfig(law, t_end=0.05 * s, dt_init=2.5e-4 * s, fixed_dt=True)
    b = run(B.scaled(c), cfg_c).states[-1].body
    assert np.max(np.abs(full_support(b) - c * full_support(a))) <= 1e-10


def test_axisymmetric_short_run():
    cfg = FlowConfig(SpeedLaw(2, 1, 1.0), t_end=0.05, dt_init=1e-5, snapshot_stride=50)
    traj = run(cb.ellipsoid_rev(1.0, 1.3, 64), cfg)
    assert traj.failure is None
    area = [r.area for r in traj.records]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(area, area[1:]))
    assert abs(traj.records[-1].volume_drift) <= 1e-8


def test_config_validation():
    with pytest.raises(DomainError):
        FlowConfig(CURVE, t_end=0.0)
    with pytest.raises(DomainError):
        FlowConfig(CURVE, t_end=1.0, dt_safety=1.5)
    with pytest.raises(DomainError):
        FlowConfig(CURVE, t_end=1.0, max_step_retries=0)
    cfg = with_law(FlowConfig(CURVE, t_end=1.0), alpha=2.0)
    assert cfg.law.alpha == 2.0


@settings(max_examples=15)
@given(st.integers(0, 5000), st.sampled_from([0.5, 1.0, 2.0]))
def test_random_bodies_step_keeps_convexity(seed, alpha):
    B = cb.random_trig(seed, 4, 0.1, 64)
    cfg = FlowConfig(SpeedLaw(1, 1, alpha), t_end=1.0, dt_init=1e-4)
    state = FlowState.initial(B, cfg)
    for _ in range(5):
        state = step(state, cfg).state
        assert cb.radii(state.body).margin > 0
    assert abs(volume_drift(state)) <= 1e-8
