import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from castline.actions import (
    DEFAULT_DT,
    Action,
    CartesianPoint,
    InfeasibleActionError,
    PolarPoint,
    Workspace,
    build_trajectory,
    check_feasible,
    feasible_actions,
    grid_sample_actions,
    mirror_action,
    radial_spline,
    scurve_profile,
)

deg = math.radians
REF_BOUNDS = [(deg(1), deg(80)), (deg(20), deg(80)), (0.21, 0.77), (deg(30), deg(60)), (2.0, 2.5)]


@pytest.fixture(scope="module")
def ref_grid():
    return grid_sample_actions(REF_BOUNDS, (5, 5, 5, 4, 2))


# -- value types ------------------------------------------------------------

def test_polar_point_validation():
    with pytest.raises(ValueError):
        PolarPoint(-0.1, 0.0)
    with pytest.raises(ValueError):
        PolarPoint(1.0, 4.0)
    p = PolarPoint(2.0, math.pi / 2)
    assert p.to_cartesian().distance(CartesianPoint(0.0, 2.0)) < 1e-15
    assert p.mirrored() == PolarPoint(2.0, -math.pi / 2)


def test_cartesian_point_rejects_nan():
    with pytest.raises(ValueError):
        CartesianPoint(float("nan"), 0.0)


@pytest.mark.parametrize("bad", [
    dict(r1=0.0), dict(r2=-1.0), dict(v_max=0.0), dict(theta1=float("inf")),
])
def test_action_validation(bad):
    base = dict(theta1=0.5, r1=0.6, theta2=-0.5, r2=0.6, alpha=0.5, v_max=2.0)
    with pytest.raises(ValueError):
        Action(**{**base, **bad})


def test_workspace_validation():
    with pytest.raises(ValueError):
        Workspace(r_min=0.9, r_max=0.5)
    with pytest.raises(ValueError):
        Workspace(a_max=0.0)


# -- mirroring --------------------------------------------------------------

def test_mirror_example():
    a = Action(deg(30), 0.6, deg(-40), 0.5, deg(45), 2.0)
    assert mirror_action(a) == Action(deg(-30), 0.6, deg(40), 0.5, deg(-45), 2.0)


def test_mirror_fixed_point():
    a = Action(0.0, 0.6, 0.0, 0.7, 0.0, 2.0)
    assert mirror_action(a) == a


finite = st.floats(-3.0, 3.0, allow_nan=False)
positive = st.floats(0.01, 3.0)
actions = st.builds(Action, finite, positive, finite, positive, finite, positive)


@given(actions)
def test_mirror_involution_bit_exact(a):
    assert mirror_action(mirror_action(a)).as_tuple() == a.as_tuple()


def test_grid_actions_are_canonical(ref_grid):
    assert all(a.is_canonical for a in ref_grid)
    assert not any(mirror_action(a).is_canonical for a in ref_grid)


# -- radial spline ----------------------------------------------------------

def test_radial_spline_constant():
    s = radial_spline(0.6, 0.6, 0.6, 1.0, 2.0)
    t = np.linspace(0, 2, 101)
    assert np.all(s(t) == 0.6)


def test_radial_spline_matches_scipy_and_collocation():
    r0, r1, r2, ts, T = 0.6, 0.5, 0.7, 1.0, 2.0
    s = radial_spline(r0, r1, r2, ts, T)
    ref = CubicSpline([0.0, ts, T], [r0, r1, r2], bc_type="clamped")
    t = np.linspace(0.0, T, 10_001)
    assert np.max(np.abs(s(t) - ref(t))) < 1e-12
    # independent check: least-squares cubic on dense collocation points per segment
    for k, (lo, hi) in enumerate([(0.0, ts), (ts, T)]):
        tt = np.linspace(lo, hi, 10_000)
        local = tt - lo
        A = np.vander(local, 4, increasing=True)
        coef, *_ = np.linalg.lstsq(A, ref(tt), rcond=None)
        assert np.max(np.abs(coef - s.coefficients[k])) < 1e-9


@given(
    st.floats(0.3, 1.0), st.floats(0.3, 1.0), st.floats(0.3, 1.0),
    st.floats(0.05, 2.0), st.floats(0.05, 2.0),
)
def test_radial_spline_interpolates_knots(r0, r1, r2, h1, h2):
    s = radial_spline(r0, r1, r2, h1, h1 + h2)
    assert abs(s(0.0) - r0) <= 1e-12
    assert abs(s(h1) - r1) <= 1e-12
    assert abs(s(h1 + h2) - r2) <= 1e-12
    assert abs(s.derivative(0.0)) <= 1e-12
    assert abs(s.derivative(h1 + h2)) <= 1e-9


def test_radial_spline_rejects_degenerate_segments():
    with pytest.raises(ValueError):
        radial_spline(0.6, 0.6, 0.6, 0.0, 1.0)


# -- S-curve ----------------------------------------------------------------

def test_scurve_zero_delta():
    assert scurve_profile(0.0, 2.0, 8.0, 80.0).duration == 0.0


def _integrate_jerk(profile):
    """Integrate the piecewise-constant jerk sequence numerically."""
    state = np.zeros(3)
    for k, T in enumerate(profile.phase_times):
        if T == 0:
            continue
        j = profile.jerk * [1, 0, -1, 0, -1, 0, 1][k]
        sol = solve_ivp(lambda t, y: [y[1], y[2], j], (0, T), state, rtol=1e-12, atol=1e-14)
        state = sol.y[:, -1]
    return state


def test_scurve_cruise_duration_closed_form():
    D, v, a, j = 2.0, 2.0, 8.0, 80.0
    prof = scurve_profile(D, v, a, j)
    assert prof.phase_times[3] > 0  # cruise reached
    assert abs(prof.duration - (D / v + v / a + a / j)) < 1e-12
    pos, vel, acc = _integrate_jerk(prof)
    assert abs(pos - D) < 1e-9
    assert abs(vel) < 1e-9 and abs(acc) < 1e-9


@pytest.mark.parametrize("D", [0.001, 0.05, 0.3, 0.55, 1.0])
def test_scurve_short_moves_reach_target(D):
    prof = scurve_profile(D, 2.0, 8.0, 80.0)
    pos, vel, acc = _integrate_jerk(prof)
    assert abs(pos - D) < 1e-9 and abs(vel) < 1e-9 and abs(acc) < 1e-9
    assert abs(prof.position(prof.duration) - D) < 1e-12


@given(st.floats(1e-3, 3.0), st.floats(0.5, 3.0))
@settings(max_examples=60)
def test_scurve_odd_symmetry_and_limits(D, v):
    a_max, j_max = 8.0, 80.0
    pos = scurve_profile(D, v, a_max, j_max)
    neg = scurve_profile(-D, v, a_max, j_max)
    t = np.linspace(0, pos.duration, 400)
    assert np.array_equal(neg.position(t), -pos.position(t))
    dt = 1e-4
    tt = np.arange(0, pos.duration, dt)
    p = pos.position(tt)
    vel = np.diff(p) / dt
    acc = np.diff(p, 2) / dt**2
    assert np.max(np.abs(pos.velocity(tt))) <= v * (1 + 1e-6)
    assert np.max(np.abs(vel)) <= v * (1 + 1e-6)
    assert np.max(np.abs(pos.acceleration(tt))) <= a_max * (1 + 1e-6)
    assert np.max(np.abs(acc)) <= a_max * (1 + 1e-3)
    jerk = np.diff(pos.acceleration(tt)) / dt
    assert np.max(np.abs(jerk)) <= j_max * (1 + 1e-6)


# -- trajectories -----------------------------------------------------------

def test_trajectory_duration_and_switch(ref_grid):
    a = ref_grid[123]
    traj = build_trajectory(a, 0.6)
    assert traj.duration == pytest.approx((len(traj.samples) - 1) * DEFAULT_DT, abs=1e-15)
    assert abs(traj.angular_velocity(traj.t_switch)) < 1e-9
    r = traj.samples[:, 0]
    assert r[0] == 0.6


def test_zero_sweep_is_radial_only():
    a = Action(0.0, 0.7, 0.0, 0.8, 0.0, 2.0)
    traj = build_trajectory(a, 0.6)
    assert np.all(traj.samples[:, 1] == 0.0)
    assert traj.samples[-1, 0] == pytest.approx(0.8, abs=1e-12)


def test_default_grid_motion_about_two_seconds(ref_grid):
    durations = [build_trajectory(a, 0.6).duration for a in ref_grid]
    assert 1.0 <= np.median(durations) <= 3.0


def test_trajectory_mirror_bit_exact(ref_grid):
    for a in ref_grid[::37]:
        t1 = build_trajectory(a, 0.6)
        t2 = build_trajectory(mirror_action(a), 0.6)
        assert np.array_equal(t2.samples[:, 0], t1.samples[:, 0])
        assert np.array_equal(t2.samples[:, 1:], -t1.samples[:, 1:])


def test_v_max_capped_by_workspace():
    a = Action(deg(80), 0.6, deg(-80), 0.6, 0.0, 10.0)
    ws = Workspace(v_joint_max=1.5)
    traj = build_trajectory(a, 0.6, ws=ws)
    speed = np.abs(np.diff(traj.samples[:, 1])) / traj.dt
    assert speed.max() <= 1.5 * (1 + 1e-6)


# -- feasibility ------------------------------------------------------------

def test_infeasible_inside_r_min():
    traj = build_trajectory(Action(0.0, 0.275, 0.0, 0.275, 0.0, 1.0), 0.275)
    verdict = check_feasible(traj, Workspace())
    assert not verdict
    assert any("r < r_min" in v for v in verdict.violations)


def test_stationary_is_feasible():
    traj = build_trajectory(Action(0.0, 0.6, 0.0, 0.6, 0.0, 1.0), 0.6)
    assert check_feasible(traj, Workspace())


def test_infeasible_error_carries_violations():
    err = InfeasibleActionError("x", ["r > r_max at sample 3"])
    assert err.violations == ["r > r_max at sample 3"]


def test_reference_grid_survival_rate(ref_grid):
    ok = feasible_actions(ref_grid, 0.6, Workspace())
    frac = len(ok) / len(ref_grid)
    assert abs(frac - 0.522) <= 0.25
    assert len(ok) == 400


# -- grids ------------------------------------------------------------------

def test_grid_sizes():
    assert len(grid_sample_actions(REF_BOUNDS, (5, 5, 5, 4, 2))) == 1000
    assert len(grid_sample_actions(REF_BOUNDS, (15, 15, 15, 10, 2))) == 67_500


def test_grid_single_point_at_lower_bounds():
    (a,) = grid_sample_actions(REF_BOUNDS, (1, 1, 1, 1, 1))
    assert a == Action(deg(1), 0.6, -deg(20), 0.21, deg(30), 2.0)


def test_grid_row_major_order():
    acts = grid_sample_actions(REF_BOUNDS, (2, 1, 1, 1, 3))
    assert [a.v_max for a in acts[:3]] == [2.0, 2.25, 2.5]
    assert acts[0].theta1 == acts[2].theta1 < acts[3].theta1


def test_grid_rejects_inverted_bounds():
    bad = list(REF_BOUNDS)
    bad[2] = (0.8, 0.2)
    with pytest.raises(ValueError):
        grid_sample_actions(bad, (2, 2, 2, 2, 2))
