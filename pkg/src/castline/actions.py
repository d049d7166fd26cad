"""Casting action space and gripper trajectory generation.

An action sweeps the held cable end through two arcs in polar coordinates
around the robot base: from the reset pose ``(r0, 0)`` out to
``(r1, theta1)`` and back across to ``(r2, theta2)``.  The angular
coordinate follows a jerk-limited S-curve on each arc (coming to rest at
the switch point) and the radial coordinate follows a clamped cubic spline
through the three knots.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PolarPoint",
    "CartesianPoint",
    "Action",
    "Workspace",
    "RadialSpline",
    "SCurve",
    "GripperTrajectory",
    "Feasibility",
    "InfeasibleActionError",
    "mirror_action",
    "radial_spline",
    "scurve_profile",
    "build_trajectory",
    "check_feasible",
    "grid_sample_actions",
    "DEFAULT_DT",
    "MIN_SEGMENT_TIME",
]

DEFAULT_DT = 1.0 / 240.0
# Arcs shorter than this (e.g. a zero sweep) are padded so the radial spline
# always has positive segment durations.
MIN_SEGMENT_TIME = 0.2


class InfeasibleActionError(ValueError):
    """Raised when an action's trajectory leaves the workspace."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


@dataclass(frozen=True)
class PolarPoint:
    r: float
    theta: float

    def __post_init__(self):
        if not self.r >= 0:
            raise ValueError(f"r must be non-negative, got {self.r}")
        if not -math.pi <= self.theta <= math.pi:
            raise ValueError(f"theta must lie in [-pi, pi], got {self.theta}")

    def to_cartesian(self) -> "CartesianPoint":
        return CartesianPoint(self.r * math.cos(self.theta), self.r * math.sin(self.theta))

    def mirrored(self) -> "PolarPoint":
        return PolarPoint(self.r, -self.theta)


@dataclass(frozen=True)
class CartesianPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def distance(self, other: "CartesianPoint") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Action:
    """Two-arc casting command.  Angles in radians, ``v_max`` in rad/s."""

    theta1: float
    r1: float
    theta2: float
    r2: float
    alpha: float
    v_max: float

    def __post_init__(self):
        values = self.as_tuple()
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite action {values}")
        if self.r1 <= 0 or self.r2 <= 0:
            raise ValueError("r1 and r2 must be positive")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")

    @property
    def is_canonical(self) -> bool:
        """True for actions on the left half (theta1 > 0, theta2 < 0, alpha >= 0)."""
        return self.theta1 > 0 and self.theta2 < 0 and self.alpha >= 0

    def as_tuple(self) -> tuple:
        return (self.theta1, self.r1, self.theta2, self.r2, self.alpha, self.v_max)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "Action":
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class Workspace:
    r_min: float = 0.55
    r_max: float = 0.90
    v_joint_max: float = 3.0
    a_max: float = 8.0
    j_max: float = 80.0

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError("workspace requires 0 < r_min < r_max")
        if min(self.v_joint_max, self.a_max, self.j_max) <= 0:
            raise ValueError("workspace rate limits must be positive")


def mirror_action(a: Action) -> Action:
    """Reflect an action across the workspace symmetry axis."""
    return Action(-a.theta1, a.r1, -a.theta2, a.r2, -a.alpha, a.v_max)


# ---------------------------------------------------------------------------
# radial profile


@dataclass(frozen=True)
class RadialSpline:
    """Two-segment cubic with clamped (zero-slope) ends.

    ``coefficients[k] = (a, b, c, d)`` gives ``r = a + b*s + c*s**2 + d*s**3``
    in the local time ``s`` of segment ``k``.
    """

    knots: tuple
    coefficients: np.ndarray

    @property
    def duration(self) -> float:
        return self.knots[2]

    def _locate(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.knots[2])
        seg = (t >= self.knots[1]).astype(int)
        s = t - np.asarray(self.knots)[seg]
        return seg, s

    def __call__(self, t):
        seg, s = self._locate(t)
        a, b, c, d = self.coefficients[seg].T
        return a + s * (b + s * (c + s * d))

    def derivative(self, t):
        seg, s = self._locate(t)
        _, b, c, d = self.coefficients[seg].T
        return b + s * (2.0 * c + 3.0 * d * s)


def radial_spline(r0: float, r1: float, r2: float, t_switch: float, duration: float) -> RadialSpline:
    """Clamped cubic spline through ``(0, r0)``, ``(t_switch, r1)``, ``(duration, r2)``.

    The interior slope is chosen so the second derivative is also continuous
    at the switch time, which makes this the natural clamped cubic spline.
    """
    h1 = t_switch
    h2 = duration - t_switch
    if not (h1 > 0 and h2 > 0):
        raise ValueError(f"spline segments need positive durations, got {h1}, {h2}")
    m = (6.0 * (r2 - r1) / h2**2 - 6.0 * (r0 - r1) / h1**2) / (4.0 / h1 + 4.0 / h2)

    def hermite(p0, p1, m0, m1, h):
        c = (3.0 * (p1 - p0) / h - 2.0 * m0 - m1) / h
        d = (2.0 * (p0 - p1) / h + m0 + m1) / h**2
        return (p0, m0, c, d)

    coeffs = np.array([hermite(r0, r1, 0.0, m, h1), hermite(r1, r2, m, 0.0, h2)])
    return RadialSpline((0.0, float(t_switch), float(duration)), coeffs)


# ---------------------------------------------------------------------------
# angular profile


@dataclass(frozen=True)
class SCurve:
    """Rest-to-rest jerk-limited profile covering a signed displacement.

    Seven phases of constant jerk (+j, 0, -j, 0, -j, 0, +j); zero-length
    phases are kept so indexing stays fixed.
    """

    delta: float
    phase_times: tuple
    jerk: float
    _starts: np.ndarray = field(repr=False, compare=False)
    _states: np.ndarray = field(repr=False, compare=False)

    @property
    def duration(self) -> float:
        return float(self._starts[-1])

    @property
    def peak_velocity(self) -> float:
        return float(np.max(np.abs(self._states[:, 1])))

    def _eval(self, t, order):
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, 0.0, self.duration)
        idx = np.clip(np.searchsorted(self._starts, tc, side="right") - 1, 0, 6)
        tau = tc - self._starts[idx]
        p0, v0, a0 = self._states[idx].T
        j = self.jerk * _JERK_SIGNS[idx]
        if order == 0:
            out = p0 + tau * (v0 + tau * (a0 / 2.0 + tau * j / 6.0))
        elif order == 1:
            out = v0 + tau * (a0 + tau * j / 2.0)
        else:
            out = a0 + tau * j
        if order > 0:
            out = np.where((t < 0) | (t > self.duration), 0.0, out)
        return self._sign * out

    @property
    def _sign(self) -> float:
        return -1.0 if self.delta < 0 else 1.0

    def position(self, t):
        return self._eval(t, 0)

    def velocity(self, t):
        return self._eval(t, 1)

    def acceleration(self, t):
        return self._eval(t, 2)


_JERK_SIGNS = np.array([1.0, 0.0, -1.0, 0.0, -1.0, 0.0, 1.0])


def _phase_times(dist: float, v_max: float, a_max: float, j_max: float):
    """Jerk, const-accel and cruise phase lengths for an unsigned distance."""
    if dist <= 0:
        return 0.0, 0.0, 0.0
    if v_max * j_max < a_max**2:
        tj = math.sqrt(v_max / j_max)
        ta = 0.0
    else:
        tj = a_max / j_max
        ta = v_max / a_max - tj
    # distance spent accelerating to and braking from v_max
    d_ramp = v_max * (2.0 * tj + ta)
    if dist >= d_ramp:
        return tj, ta, (dist - d_ramp) / v_max
    # cruise speed not reached
    tj_full = a_max / j_max
    if dist >= 2.0 * a_max * tj_full**2 and v_max * j_max >= a_max**2:
        ta = 0.5 * (-3.0 * tj_full + math.sqrt(tj_full**2 + 4.0 * dist / a_max))
        return tj_full, ta, 0.0
    tj = (dist / (2.0 * j_max)) ** (1.0 / 3.0)
    return tj, 0.0, 0.0


def scurve_profile(delta: float, v_max: float, a_max: float, j_max: float) -> SCurve:
    """Time-optimal jerk-limited rest-to-rest profile for a signed displacement."""
    if min(v_max, a_max, j_max) <= 0:
        raise ValueError("v_max, a_max and j_max must be positive")
    tj, ta, tv = _phase_times(abs(delta), v_max, a_max, j_max)
    times = (tj, ta, tj, tv, tj, ta, tj)
    starts = np.concatenate([[0.0], np.cumsum(times)])
    states = np.zeros((7, 3))
    p = v = a = 0.0
    for k, dt in enumerate(times):
        states[k] = (p, v, a)
        j = j_max * _JERK_SIGNS[k]
        p, v, a = (p + dt * (v + dt * (a / 2.0 + dt * j / 6.0)), v + dt * (a + dt * j / 2.0), a + dt * j)
    return SCurve(float(delta), times, float(j_max), starts, states)


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class GripperTrajectory:
    """Held-end poses sampled every ``dt``.

    ``samples`` has one row ``(r, theta, heading)`` per sample.  The last
    sample sits at or just after the end of the motion.
    """

    dt: float
    samples: np.ndarray
    t_switch: float
    duration: float
    motion_time: float
    arcs: tuple = field(repr=False, compare=False)
    radial: RadialSpline = field(repr=False, compare=False)

    def angular_velocity(self, t):
        first, second = self.arcs
        t = np.asarray(t, dtype=float)
        return np.where(t < self.t_switch, first.velocity(t), second.velocity(t - self.t_switch))

    def cartesian(self) -> np.ndarray:
        r, th = self.samples[:, 0], self.samples[:, 1]
        return np.column_stack([r * np.cos(th), r * np.sin(th)])


def build_trajectory(a: Action, r0: float, dt: float = DEFAULT_DT, ws: Workspace | None = None) -> GripperTrajectory:
    """Sample the two-arc gripper motion of ``a`` starting from ``(r0, 0)``.

    The wrist heading points radially outward (so the reset cable leaves the
    gripper straight) and picks up the wrist offset ``alpha`` linearly over
    the second arc.
    """
    ws = ws or Workspace()
    if not dt > 0:
        raise ValueError("dt must be positive")
    v_cap = min(a.v_max, ws.v_joint_max)
    first = scurve_profile(a.theta1, v_cap, ws.a_max, ws.j_max)
    second = scurve_profile(a.theta2 - a.theta1, v_cap, ws.a_max, ws.j_max)
    t_switch = max(first.duration, MIN_SEGMENT_TIME)
    t_second = max(second.duration, MIN_SEGMENT_TIME)
    motion_time = t_switch + t_second
    radial = radial_spline(r0, a.r1, a.r2, t_switch, motion_time)

    n = int(math.ceil(motion_time / dt - 1e-9))
    t = np.arange(n + 1) * dt
    theta = np.where(t < t_switch, first.position(t), a.theta1 + second.position(t - t_switch))
    ramp = np.clip((t - t_switch) / t_second, 0.0, 1.0)
    samples = np.column_stack([radial(t), theta, theta + a.alpha * ramp])
    return GripperTrajectory(dt, samples, t_switch, n * dt, motion_time, (first, second), radial)


@dataclass(frozen=True)
class Feasibility:
    ok: bool
    violations: list

    def __bool__(self):
        return self.ok


def check_feasible(traj: GripperTrajectory, ws: Workspace | None = None, rtol: float = 1e-6) -> Feasibility:
    """Workspace box plus angular speed/acceleration caps, checked sample-wise."""
    ws = ws or Workspace()
    r = traj.samples[:, 0]
    theta = traj.samples[:, 1]
    violations = []

    def first(mask, rule):
        idx = np.flatnonzero(mask)
        if idx.size:
            violations.append(f"{rule} at sample {int(idx[0])}")

    first(r < ws.r_min, "r < r_min")
    first(r > ws.r_max, "r > r_max")
    if len(theta) > 1:
        speed = np.abs(np.diff(theta)) / traj.dt
        first(speed > ws.v_joint_max * (1 + rtol), "angular speed > v_joint_max")
    if len(theta) > 2:
        accel = np.abs(np.diff(theta, 2)) / traj.dt**2
        first(accel > ws.a_max * (1 + rtol), "angular accel > a_max")
    return Feasibility(not violations, violations)


GRID_FIELDS = ("theta1", "theta2", "r2", "alpha", "v_max")


def grid_sample_actions(
    bounds: Sequence[tuple] | dict,
    freqs: Sequence[int] | dict,
    r1_fixed: float = 0.6,
) -> list[Action]:
    """Row-major grid over ``(theta1, theta2, r2, alpha, v_max)``.

    ``theta2`` bounds are given as magnitudes and negated, so every action
    lands on the canonical left half.  ``r1`` is held at ``r1_fixed``.
    """
    if isinstance(bounds, dict):
        bounds = [bounds[k] for k in GRID_FIELDS]
    if isinstance(freqs, dict):
        freqs = [freqs[k] for k in GRID_FIELDS]
    if len(bounds) != 5 or len(freqs) != 5:
        raise ValueError("expected bounds and freqs for 5 parameters")
    axes = []
    for (lo, hi), n in zip(bounds, freqs):
        if lo > hi:
            raise ValueError(f"lower bound {lo} exceeds upper bound {hi}")
        if int(n) < 1:
            raise ValueError("grid frequencies must be >= 1")
        axes.append(np.linspace(lo, hi, int(n)) if n > 1 else np.array([float(lo)]))
    return [
        Action(float(t1), r1_fixed, -float(t2), float(r2), float(al), float(v))
        for t1, t2, r2, al, v in itertools.product(*axes)
    ]


def feasible_actions(actions: Iterable[Action], r0: float, ws: Workspace, dt: float = DEFAULT_DT) -> list[Action]:
    return [a for a in actions if check_feasible(build_trajectory(a, r0, dt, ws), ws)]
