"""Planar free-end cable simulator.

The cable is a chain of ``n_links + 1`` particles advanced with
position-based dynamics: damping and Coulomb floor friction act on the
velocities, predicted positions are projected onto the link-length and
joint-friction constraints, and velocities are recovered from the
projected displacement.  Particle 0 is pinned to the gripper and particle 1
is clamped along the gripper heading.

The hot loop is compiled with numba; everything else is plain numpy.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numba import njit

from .actions import (
    DEFAULT_DT,
    Action,
    CartesianPoint,
    InfeasibleActionError,
    Workspace,
    build_trajectory,
    check_feasible,
)

__all__ = [
    "SimParams",
    "CableState",
    "TrajectoryRecord",
    "SimulationDiverged",
    "WorkspaceError",
    "reset_state",
    "perturbed_reset",
    "step",
    "rollout",
    "pull_rollout",
    "kinetic_energy",
    "free_slide",
    "link_errors",
    "reflect_record",
    "GRAVITY",
    "V_STICK",
    "N_ITER",
    "WAYPOINT_MS",
]

GRAVITY = 9.81
V_STICK = 1e-3
N_ITER = 10
WAYPOINT_MS = 100
SETTLE_SPEED = 1e-3
SETTLE_TIME = 0.5
SETTLE_TIMEOUT = 10.0
PULL_SPEED = 0.05
MAX_LINKS = 30
# joint-friction stage is abandoned if pinning stuck particles leaves a
# link stretched by more than this relative amount
_STATIC_LINK_TOL = 2e-4


class SimulationDiverged(RuntimeError):
    def __init__(self, step_index):
        super().__init__(f"simulation diverged at step {step_index}")
        self.step_index = step_index


class WorkspaceError(ValueError):
    def __init__(self, message, max_pull=None):
        super().__init__(message)
        self.max_pull = max_pull


@dataclass(frozen=True)
class SimParams:
    """Tunable physics of the segmented cable.

    ``bend_stiffness`` is the fraction of each step's joint-angle change
    the joints resist (joint friction), ``joint_damping`` damps relative
    transverse velocity of neighbouring particles (1/s) and ``drag`` is a
    linear floor/air drag for the whole cable (N s/m).  ``drag`` has an
    absolute force scale, which is what makes the masses observable: with
    only mass-proportional forces the motion would not depend on the
    overall mass.
    """

    bend_stiffness: float = 0.1
    joint_damping: float = 1.0
    cable_mass: float = 0.05
    endpoint_mass: float = 0.02
    mu_d: float = 0.2
    mu_s: float = 0.25
    n_links: int = 18
    cable_length: float = 0.65
    drag: float = 0.05

    def __post_init__(self):
        if self.cable_mass <= 0 or self.endpoint_mass <= 0:
            raise ValueError("masses must be positive")
        if not 0 <= self.mu_d <= self.mu_s:
            raise ValueError(f"need 0 <= mu_d <= mu_s, got {self.mu_d}, {self.mu_s}")
        if not 0 <= self.bend_stiffness <= 1:
            raise ValueError("bend_stiffness must lie in [0, 1]")
        if self.n_links < 2:
            raise ValueError("n_links must be >= 2")
        if self.n_links > MAX_LINKS:
            raise ValueError(f"n_links is capped at {MAX_LINKS}")
        if self.n_links > 18:
            warnings.warn("more than 18 links slows the solver without improving fidelity", stacklevel=2)
        if self.cable_length <= 0 or self.joint_damping < 0 or self.drag < 0:
            raise ValueError("cable_length must be positive; damping and drag non-negative")

    @property
    def segment(self) -> float:
        return self.cable_length / self.n_links

    def masses(self) -> np.ndarray:
        m = np.full(self.n_links + 1, self.cable_mass / self.n_links)
        m[0] *= 0.5
        m[-1] *= 0.5
        m[-1] += self.endpoint_mass
        return m

    def drag_coefficients(self) -> np.ndarray:
        c = np.full(self.n_links + 1, self.drag / self.n_links)
        c[0] *= 0.5
        c[-1] *= 0.5
        return c

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class CableState:
    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    def copy(self) -> "CableState":
        return CableState(self.positions.copy(), self.velocities.copy(), self.time)

    @property
    def free_end(self) -> CartesianPoint:
        return CartesianPoint(*map(float, self.positions[-1]))


@dataclass
class TrajectoryRecord:
    action: Action
    waypoints: np.ndarray
    final: np.ndarray
    duration_ms: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)
        self.final = np.asarray(self.final, dtype=float).reshape(2)
        if len(self.waypoints) != self.duration_ms // WAYPOINT_MS:
            raise ValueError(
                f"{len(self.waypoints)} waypoints for a {self.duration_ms} ms trajectory"
            )

    def to_json(self) -> str:
        return json.dumps(
            {
                "action": list(self.action.as_tuple()),
                "waypoints": self.waypoints.tolist(),
                "final": self.final.tolist(),
                "duration_ms": int(self.duration_ms),
                "meta": self.meta,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "TrajectoryRecord":
        d = json.loads(line)
        return cls(Action.from_sequence(d["action"]), d["waypoints"], d["final"], int(d["duration_ms"]), d.get("meta", {}))

    def __eq__(self, other):
        if not isinstance(other, TrajectoryRecord):
            return NotImplemented
        return (
            self.action == other.action
            and self.duration_ms == other.duration_ms
            and np.array_equal(self.waypoints, other.waypoints)
            and np.array_equal(self.final, other.final)
            and self.meta == other.meta
        )


# ---------------------------------------------------------------------------
# compiled core


@njit(cache=True)
def _joint_angle(ax, ay, bx, by, cx, cy):
    e1x, e1y = bx - ax, by - ay
    e2x, e2y = cx - bx, cy - by
    return math.atan2(e1x * e2y - e1y * e2x, e1x * e2x + e1y * e2y)


@njit(cache=True)
def _project(p, w, rest, seg, k_iter, n_iter):
    n = p.shape[0]
    for _ in range(n_iter):
        if k_iter > 0.0:
            for j in range(1, n - 1):
                w0, w1, w2 = w[j - 1], w[j], w[j + 1]
                if w0 + w1 + w2 == 0.0:
                    continue
                e1x, e1y = p[j, 0] - p[j - 1, 0], p[j, 1] - p[j - 1, 1]
                e2x, e2y = p[j + 1, 0] - p[j, 0], p[j + 1, 1] - p[j, 1]
                l1 = e1x * e1x + e1y * e1y
                l2 = e2x * e2x + e2y * e2y
                if l1 < 1e-18 or l2 < 1e-18:
                    continue
                c = math.atan2(e1x * e2y - e1y * e2x, e1x * e2x + e1y * e2y) - rest[j]
                if c > math.pi:
                    c -= 2.0 * math.pi
                elif c < -math.pi:
                    c += 2.0 * math.pi
                # d(angle)/dp for the three particles
                g0x, g0y = -e1y / l1, e1x / l1
                g2x, g2y = -e2y / l2, e2x / l2
                g1x, g1y = -g0x - g2x, -g0y - g2y
                denom = (
                    w0 * (g0x * g0x + g0y * g0y)
                    + w1 * (g1x * g1x + g1y * g1y)
                    + w2 * (g2x * g2x + g2y * g2y)
                )
                if denom < 1e-18:
                    continue
                s = -k_iter * c / denom
                p[j - 1, 0] += s * w0 * g0x
                p[j - 1, 1] += s * w0 * g0y
                p[j, 0] += s * w1 * g1x
                p[j, 1] += s * w1 * g1y
                p[j + 1, 0] += s * w2 * g2x
                p[j + 1, 1] += s * w2 * g2y
        for i in range(n - 1):
            wsum = w[i] + w[i + 1]
            if wsum == 0.0:
                continue
            dx = p[i + 1, 0] - p[i, 0]
            dy = p[i + 1, 1] - p[i, 1]
            d = math.sqrt(dx * dx + dy * dy)
            if d < 1e-15:
                continue
            corr = (d - seg) / (d * wsum)
            p[i, 0] += w[i] * corr * dx
            p[i, 1] += w[i] * corr * dy
            p[i + 1, 0] -= w[i + 1] * corr * dx
            p[i + 1, 1] -= w[i + 1] * corr * dy
    _chain_solve(p, w, seg, 3)


@njit(cache=True)
def _chain_solve(p, w, seg, newton_steps):
    """Newton steps on all link constraints at once.

    The linearised system J W J^T dl = -C is tridiagonal for a chain, so
    each step is a Thomas solve.  This removes the stretch that sequential
    sweeps leave behind a heavy tip.
    """
    m = p.shape[0] - 1
    ux = np.empty(m)
    uy = np.empty(m)
    c = np.empty(m)
    diag = np.empty(m)
    off = np.zeros(m)
    lam = np.empty(m)
    for _ in range(newton_steps):
        for i in range(m):
            dx = p[i + 1, 0] - p[i, 0]
            dy = p[i + 1, 1] - p[i, 1]
            d = math.sqrt(dx * dx + dy * dy)
            if d < 1e-15:
                d = 1e-15
            ux[i] = dx / d
            uy[i] = dy / d
            c[i] = d - seg
            diag[i] = w[i] + w[i + 1]
        for i in range(m - 1):
            off[i] = -w[i + 1] * (ux[i] * ux[i + 1] + uy[i] * uy[i + 1])
        # constraints between two fixed particles drop out
        for i in range(m):
            if diag[i] == 0.0:
                diag[i] = 1.0
                c[i] = 0.0
                if i > 0:
                    off[i - 1] = 0.0
                off[i] = 0.0
        # Thomas algorithm on A lam = -c (symmetric tridiagonal)
        cp = np.empty(m)
        dp = np.empty(m)
        cp[0] = off[0] / diag[0]
        dp[0] = -c[0] / diag[0]
        for i in range(1, m):
            den = diag[i] - off[i - 1] * cp[i - 1]
            cp[i] = off[i] / den if i < m - 1 else 0.0
            dp[i] = (-c[i] - off[i - 1] * dp[i - 1]) / den
        lam[m - 1] = dp[m - 1]
        for i in range(m - 2, -1, -1):
            lam[i] = dp[i] - cp[i] * lam[i + 1]
        for j in range(m + 1):
            if w[j] == 0.0:
                continue
            gx = 0.0
            gy = 0.0
            if j > 0:
                gx += lam[j - 1] * ux[j - 1]
                gy += lam[j - 1] * uy[j - 1]
            if j < m:
                gx -= lam[j] * ux[j]
                gy -= lam[j] * uy[j]
            p[j, 0] += w[j] * gx
            p[j, 1] += w[j] * gy


@njit(cache=True)
def _max_link_error(p, seg):
    worst = 0.0
    for i in range(p.shape[0] - 1):
        dx = p[i + 1, 0] - p[i, 0]
        dy = p[i + 1, 1] - p[i, 1]
        e = abs(math.sqrt(dx * dx + dy * dy) - seg) / seg
        if e > worst:
            worst = e
    return worst


@njit(cache=True)
def _floor_friction(vx, vy, decay, dec):
    """Implicit drag, then a Coulomb speed loss of ``dec`` that cannot reverse motion."""
    vx *= decay
    vy *= decay
    spd = math.sqrt(vx * vx + vy * vy)
    if spd <= dec:
        return 0.0, 0.0
    s = 1.0 - dec / spd
    return vx * s, vy * s


@njit(cache=True)
def _slide(speed, decay, dec, dt, max_steps):
    x = 0.0
    v = speed
    for k in range(max_steps):
        v, _ = _floor_friction(v, 0.0, decay, dec)
        x += v * dt
        if v == 0.0:
            return (k + 1) * dt, x
    return max_steps * dt, x


@njit(cache=True)
def _step(x, v, inv_m, decay, grip, seg, k_iter, damp, mu_d, mu_s, dt, n_iter, p, p_save, w, rest, stuck):
    """Advance one step in place.  Returns False if the state went non-finite."""
    n = x.shape[0]
    # transverse damping between neighbours (momentum-conserving impulses)
    f = min(1.0, damp * dt)
    if f > 0.0:
        for i in range(n - 1):
            wsum = inv_m[i] + inv_m[i + 1]
            if wsum == 0.0:
                continue
            ex, ey = x[i + 1, 0] - x[i, 0], x[i + 1, 1] - x[i, 1]
            el = math.sqrt(ex * ex + ey * ey)
            if el < 1e-15:
                continue
            ex /= el
            ey /= el
            rx, ry = v[i + 1, 0] - v[i, 0], v[i + 1, 1] - v[i, 1]
            along = rx * ex + ry * ey
            ux, uy = f * (rx - along * ex), f * (ry - along * ey)
            a = inv_m[i] / wsum
            b = inv_m[i + 1] / wsum
            v[i, 0] += a * ux
            v[i, 1] += a * uy
            v[i + 1, 0] -= b * ux
            v[i + 1, 1] -= b * uy

    dec = mu_d * GRAVITY * dt
    for i in range(n):
        if inv_m[i] == 0.0:
            stuck[i] = False
            continue
        spd0 = math.sqrt(v[i, 0] * v[i, 0] + v[i, 1] * v[i, 1])
        stuck[i] = spd0 < V_STICK
        v[i, 0], v[i, 1] = _floor_friction(v[i, 0], v[i, 1], decay[i], dec)

    for i in range(n):
        p[i, 0] = x[i, 0] + v[i, 0] * dt
        p[i, 1] = x[i, 1] + v[i, 1] * dt
        w[i] = inv_m[i]
    p[0, 0] = grip[0]
    p[0, 1] = grip[1]
    p[1, 0] = grip[0] + seg * math.cos(grip[2])
    p[1, 1] = grip[1] + seg * math.sin(grip[2])

    for j in range(1, n - 1):
        rest[j] = _joint_angle(x[j - 1, 0], x[j - 1, 1], x[j, 0], x[j, 1], x[j + 1, 0], x[j + 1, 1])
    _project(p, w, rest, seg, k_iter, n_iter)

    # static friction: resting particles whose required acceleration is
    # below mu_s * g stay put
    hold = mu_s * GRAVITY * dt * dt
    any_stuck = False
    for i in range(n):
        if stuck[i]:
            dx, dy = p[i, 0] - x[i, 0], p[i, 1] - x[i, 1]
            disp = math.sqrt(dx * dx + dy * dy)
            if disp < hold:
                if disp > 0.0:
                    any_stuck = True
            else:
                stuck[i] = False
    if any_stuck:
        p_save[:, :] = p
        for i in range(n):
            if stuck[i]:
                p[i, 0] = x[i, 0]
                p[i, 1] = x[i, 1]
                w[i] = 0.0
        _project(p, w, rest, seg, k_iter, n_iter)
        if _max_link_error(p, seg) > _STATIC_LINK_TOL:
            p[:, :] = p_save

    ok = True
    inv_dt = 1.0 / dt
    for i in range(n):
        v[i, 0] = (p[i, 0] - x[i, 0]) * inv_dt
        v[i, 1] = (p[i, 1] - x[i, 1]) * inv_dt
        x[i, 0] = p[i, 0]
        x[i, 1] = p[i, 1]
        if not (math.isfinite(x[i, 0]) and math.isfinite(x[i, 1])):
            ok = False
    return ok


@njit(cache=True)
def _advance(x, v, inv_m, decay, grips, seg, k_iter, damp, mu_d, mu_s, dt, n_iter, quiet, quiet_speed):
    """Step through ``grips`` (rows of x, y, heading).

    Returns ``(first_bad_step or -1, consecutive_quiet_steps)``.
    """
    n = x.shape[0]
    p = np.empty_like(x)
    p_save = np.empty_like(x)
    w = np.empty(n)
    rest = np.zeros(n)
    stuck = np.zeros(n, dtype=np.bool_)
    for s in range(grips.shape[0]):
        # a cable at rest under a parked gripper stays at rest
        if s > 0 and quiet > 0 and grips[s, 0] == grips[s - 1, 0] and grips[s, 1] == grips[s - 1, 1] \
                and grips[s, 2] == grips[s - 1, 2] and not v.any():
            quiet += 1
            continue
        if not _step(x, v, inv_m, decay, grips[s], seg, k_iter, damp, mu_d, mu_s, dt, n_iter, p, p_save, w, rest, stuck):
            return s, quiet
        fastest = 0.0
        for i in range(n):
            sp = v[i, 0] * v[i, 0] + v[i, 1] * v[i, 1]
            if sp > fastest:
                fastest = sp
        if math.sqrt(fastest) < quiet_speed:
            quiet += 1
        else:
            quiet = 0
    return -1, quiet


# ---------------------------------------------------------------------------
# python surface


class _Engine:
    """Per-parameter constants for the compiled step."""

    def __init__(self, params: SimParams, dt: float):
        self.params = params
        self.dt = dt
        m = params.masses()
        self.inv_m = 1.0 / m
        self.inv_m[:2] = 0.0
        # implicit linear drag: v <- v / (1 + c dt / m)
        self.decay = 1.0 / (1.0 + params.drag_coefficients() * dt / m)
        self.seg = params.segment
        self.k_iter = 1.0 - (1.0 - params.bend_stiffness) ** (1.0 / N_ITER)
        self.steps = 0

    def advance(self, state: CableState, grips: np.ndarray, quiet: int = 0) -> int:
        grips = np.ascontiguousarray(grips, dtype=float).reshape(-1, 3)
        p = self.params
        bad, quiet = _advance(
            state.positions, state.velocities, self.inv_m, self.decay, grips, self.seg,
            self.k_iter, p.joint_damping, p.mu_d, p.mu_s, self.dt, N_ITER, quiet, SETTLE_SPEED,
        )
        if bad >= 0:
            raise SimulationDiverged(self.steps + bad)
        self.steps += len(grips)
        state.time += len(grips) * self.dt
        return quiet


def polar_to_grip(samples: np.ndarray) -> np.ndarray:
    """(r, theta, heading) rows to (x, y, heading) rows."""
    samples = np.asarray(samples, dtype=float).reshape(-1, 3)
    r, th, h = samples.T
    return np.column_stack([r * np.cos(th), r * np.sin(th), h])


def reset_state(params: SimParams, r0: float = 0.6, theta: float = 0.0) -> CableState:
    """Straight cable along the ``theta`` ray with the held end at radius ``r0``."""
    s = r0 + np.arange(params.n_links + 1) * params.segment
    if theta == 0.0:
        pos = np.column_stack([s, np.zeros_like(s)])
    else:
        pos = np.column_stack([s * math.cos(theta), s * math.sin(theta)])
    return CableState(pos, np.zeros_like(pos), 0.0)


def perturbed_reset(params: SimParams, r0: float, sigma: float, rng: np.random.Generator) -> CableState:
    """Reset with a smooth random lateral bend of roughly ``sigma`` metres.

    Link lengths are exact; the first link stays on the axis because the
    gripper clamps it.
    """
    n = params.n_links
    u = np.arange(n + 1) / n
    modes = np.arange(1, 4)
    coef = rng.standard_normal(len(modes)) / modes
    field = (np.sin(np.outer(u, modes) * np.pi / 2.0) @ coef) if sigma > 0 else np.zeros(n + 1)
    spread = np.std(field[2:]) if sigma > 0 else 1.0
    offsets = sigma * field / (spread if spread > 0 else 1.0)
    seg = params.segment
    pos = np.zeros((n + 1, 2))
    pos[0] = (r0, 0.0)
    pos[1] = (r0 + seg, 0.0)
    for i in range(2, n + 1):
        target = np.array([r0 + i * seg, offsets[i]])
        d = target - pos[i - 1]
        pos[i] = pos[i - 1] + seg * d / np.linalg.norm(d)
    return CableState(pos, np.zeros_like(pos), 0.0)


def step(state: CableState, gripper, params: SimParams, dt: float = DEFAULT_DT) -> CableState:
    """One simulation step with the gripper at polar pose ``(r, theta, heading)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    out = state.copy()
    _Engine(params, dt).advance(out, polar_to_grip(gripper))
    return out


def free_slide(speed: float, params: SimParams, mass: float | None = None, dt: float = DEFAULT_DT, max_time: float = 60.0):
    """Slide one unconstrained particle with the cable's floor friction.

    Returns ``(stop_time, distance)``.  ``mass`` (default: the endpoint
    particle's mass) only matters through ``drag``.
    """
    m = params.masses()[-1] if mass is None else mass
    c = params.drag_coefficients()[-1]
    decay = 1.0 / (1.0 + c * dt / m)
    return _slide(float(speed), decay, params.mu_d * GRAVITY * dt, dt, int(max_time / dt))


def kinetic_energy(state: CableState, params: SimParams) -> float:
    return 0.5 * float(np.sum(params.masses() * np.sum(state.velocities**2, axis=1)))


def link_errors(positions: np.ndarray, params: SimParams) -> np.ndarray:
    """Relative deviation of every link length from its rest length."""
    d = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    return np.abs(d - params.segment) / params.segment


def _settle(engine: _Engine, state: CableState, hold: np.ndarray, timeout: float = SETTLE_TIMEOUT):
    needed = int(round(SETTLE_TIME / engine.dt))
    chunk = int(round(WAYPOINT_MS / 1000 / engine.dt))
    grips = np.tile(hold, (chunk, 1))
    quiet = 0
    elapsed = 0
    limit = int(round(timeout / engine.dt))
    while quiet < needed and elapsed < limit:
        quiet = engine.advance(state, grips, quiet)
        elapsed += chunk
    return quiet >= needed


def rollout(
    a: Action,
    params: SimParams,
    r0: float = 0.6,
    ws: Workspace | None = None,
    dt: float = DEFAULT_DT,
    start: CableState | None = None,
    observer=None,
) -> TrajectoryRecord:
    """Drive the cable with action ``a``, then let it settle.

    Waypoints are the free-end positions every 100 ms of the driven phase.
    ``observer(phase, state)`` is called after every waypoint chunk, with
    ``phase`` either ``"driven"`` or ``"settle"``; it exists for diagnostics.
    """
    ws = ws or Workspace()
    traj = build_trajectory(a, r0, dt, ws)
    verdict = check_feasible(traj, ws)
    if not verdict:
        raise InfeasibleActionError(f"infeasible action: {verdict.violations}", verdict.violations)
    state = start.copy() if start is not None else reset_state(params, r0)
    engine = _Engine(params, dt)
    grips = polar_to_grip(traj.samples)

    duration_ms = int(round(traj.duration * 1000.0))
    n_way = duration_ms // WAYPOINT_MS
    chunk = int(round(WAYPOINT_MS / 1000 / dt))
    waypoints = np.empty((n_way, 2))
    done = 0
    for k in range(n_way):
        engine.advance(state, grips[done + 1 : (k + 1) * chunk + 1])
        done = (k + 1) * chunk
        waypoints[k] = state.positions[-1]
        if observer is not None:
            observer("driven", state)
    if done + 1 < len(grips):
        engine.advance(state, grips[done + 1 :])
    if observer is None:
        settled = _settle(engine, state, grips[-1])
    else:
        settled = _observed_settle(engine, state, grips[-1], observer)
    meta = {"params_hash": params.digest(), "source": "simulated", "settled": bool(settled)}
    return TrajectoryRecord(a, waypoints, state.positions[-1].copy(), duration_ms, meta)


def _observed_settle(engine, state, hold, observer):
    needed = int(round(SETTLE_TIME / engine.dt))
    limit = int(round(SETTLE_TIMEOUT / engine.dt))
    quiet = elapsed = 0
    one = hold.reshape(1, 3)
    while quiet < needed and elapsed < limit:
        quiet = engine.advance(state, one, quiet)
        elapsed += 1
        observer("settle", state)
    return quiet >= needed


def pull_rollout(
    start: CableState,
    pull_distance: float,
    params: SimParams,
    r_min: float = 0.55,
    dt: float = DEFAULT_DT,
) -> CableState:
    """Drag the held end radially inward by ``pull_distance`` at 5 cm/s and settle."""
    if pull_distance < 0:
        raise ValueError("pull_distance must be non-negative")
    state = start.copy()
    g = state.positions[0]
    r_g = math.hypot(g[0], g[1])
    theta = math.atan2(g[1], g[0])
    d1 = state.positions[1] - g
    heading = math.atan2(d1[1], d1[0])
    max_pull = r_g - r_min
    if r_g - pull_distance < r_min - 1e-12:
        raise WorkspaceError(
            f"pull of {pull_distance:.4f} m would put the gripper inside r_min; max admissible {max_pull:.4f} m",
            max_pull=max_pull,
        )
    engine = _Engine(params, dt)
    n = int(math.ceil(pull_distance / (PULL_SPEED * dt) - 1e-9))
    if n > 0:
        r = r_g - pull_distance * np.arange(1, n + 1) / n
        grips = np.column_stack([r * math.cos(theta), r * math.sin(theta), np.full(n, heading)])
        engine.advance(state, grips)
    hold = np.array([(r_g - pull_distance) * math.cos(theta), (r_g - pull_distance) * math.sin(theta), heading])
    _settle(engine, state, hold)
    return state


def reflect_record(rec: TrajectoryRecord) -> TrajectoryRecord:
    """Mirror a record across the x axis (actions and positions)."""
    from .actions import mirror_action

    flip = np.array([1.0, -1.0])
    return TrajectoryRecord(mirror_action(rec.action), rec.waypoints * flip, rec.final * flip, rec.duration_ms, dict(rec.meta))


def with_values(params: SimParams, **values) -> SimParams:
    return replace(params, **values)
