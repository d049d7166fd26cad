"""Target-reaching policies and the evaluation harness."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .actions import Action, CartesianPoint, InfeasibleActionError, PolarPoint, Workspace, mirror_action
from .cablesim import (
    SimParams,
    SimulationDiverged,
    TrajectoryRecord,
    perturbed_reset,
    pull_rollout,
    reset_state,
    rollout,
)

__all__ = [
    "CandidateSet",
    "EvalReport",
    "ModelPolicy",
    "CastAndPull",
    "select_action",
    "cast_and_pull",
    "make_targets",
    "evaluate",
    "nearest_endpoint_distances",
    "covering_distance",
    "error_stats",
]


@dataclass
class CandidateSet:
    """Ordered candidate actions, canonical half first.

    When built with ``mirror=True`` the second half holds the mirror image of
    the first, in the same order, and its predictions are reflections of the
    canonical ones.
    """

    actions: list
    predicted: np.ndarray | None = None
    n_canonical: int | None = None

    def __post_init__(self):
        if not self.actions:
            raise ValueError("candidate set must not be empty")
        if self.n_canonical is None:
            self.n_canonical = len(self.actions)
        self._vectors = np.array([a.as_tuple() for a in self.actions])

    @classmethod
    def from_actions(cls, actions: Sequence[Action], mirror: bool = True) -> "CandidateSet":
        actions = list(actions)
        if mirror:
            return cls(actions + [mirror_action(a) for a in actions], None, len(actions))
        return cls(actions, None, len(actions))

    @property
    def mirrored(self) -> bool:
        return self.n_canonical * 2 == len(self.actions) and self.n_canonical != len(self.actions)

    def __len__(self):
        return len(self.actions)

    def ensure_predictions(self, model) -> np.ndarray:
        if self.predicted is None:
            if model is None:
                raise ValueError("no cached predictions and no model supplied")
            if self.mirrored:
                half = model.predict_array(self._vectors[: self.n_canonical])
                self.predicted = np.concatenate([half, half * np.array([1.0, -1.0])])
            else:
                self.predicted = model.predict_array(self._vectors)
        return self.predicted

    def with_endpoints(self, endpoints: np.ndarray) -> "CandidateSet":
        """Copy whose cached predictions are the given endpoints."""
        return CandidateSet(self.actions, np.asarray(endpoints, dtype=float), self.n_canonical)


def _target_xy(target: PolarPoint | CartesianPoint) -> np.ndarray:
    if isinstance(target, PolarPoint):
        target = target.to_cartesian()
    return np.array([target.x, target.y])


def select_index(model, candidates: CandidateSet, target, distance: Callable | None = None) -> int:
    pred = candidates.ensure_predictions(model)
    diff = pred - _target_xy(target)
    d = np.sqrt(np.sum(diff**2, axis=1)) if distance is None else distance(diff)
    return int(np.argmin(d))


def select_action(model, candidates: CandidateSet, target: PolarPoint, distance: Callable | None = None) -> Action:
    """Candidate whose predicted endpoint lies closest to ``target``.

    Ties go to the lowest index.  ``distance`` maps the (n, 2) array of
    prediction-minus-target offsets to scores; Euclidean by default.
    """
    return candidates.actions[select_index(model, candidates, target, distance)]


@dataclass
class ModelPolicy:
    model: object
    candidates: CandidateSet
    name: str = "model"

    def __call__(self, target: PolarPoint) -> Action:
        return select_action(self.model, self.candidates, target)


def cast_and_pull(
    target: PolarPoint,
    params: SimParams,
    r0: float = 0.6,
    ws: Workspace | None = None,
    start=None,
) -> TrajectoryRecord:
    """Lay the cable straight along the target bearing, then pull it in.

    The pull is clamped so the gripper never passes ``r_min``; targets
    nearer than that are left short.
    """
    ws = ws or Workspace()
    state = reset_state(params, r0, target.theta) if start is None else start
    free_r = r0 + params.cable_length
    pull = float(np.clip(free_r - target.r, 0.0, max(0.0, r0 - ws.r_min)))
    settled = pull_rollout(state, pull, params, ws.r_min)
    action = Action(target.theta, r0, target.theta, r0 - pull if r0 - pull > 0 else r0, 0.0, 1.0)
    meta = {"params_hash": params.digest(), "source": "cast_and_pull", "pull": pull}
    return TrajectoryRecord(action, np.empty((0, 2)), settled.positions[-1].copy(), 0, meta)


@dataclass
class CastAndPull:
    name: str = "cast_and_pull"

    def run(self, target, params, r0, ws, start=None):
        return cast_and_pull(target, params, r0, ws, _rotate_start(start, target.theta)).final


def _rotate_start(start, theta):
    if start is None:
        return None
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    out = start.copy()
    out.positions = start.positions @ rot.T
    return out


def make_targets(n: int = 16, annulus=(0.8, 1.3), sector=(0.0, math.radians(90)), seed: int = 0) -> list:
    """Scrambled-Halton targets spread evenly (by area) over an annular sector."""
    if n < 1:
        raise ValueError("need at least one target")
    r_lo, r_hi = annulus
    th_lo, th_hi = sector
    if not 0 <= r_lo < r_hi:
        raise ValueError("annulus needs 0 <= r_low < r_high")
    if not 0 <= th_lo <= th_hi <= math.pi:
        raise ValueError("targets live on the left half: need 0 <= theta_low <= theta_high <= pi")
    u = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
    r = np.sqrt(r_lo**2 + u[:, 0] * (r_hi**2 - r_lo**2))
    th = th_lo + u[:, 1] * (th_hi - th_lo)
    return [PolarPoint(float(a), float(b)) for a, b in zip(r, th)]


def error_stats(errors: Sequence[float], cable_length: float) -> dict:
    e = np.asarray(errors, dtype=float) / cable_length
    q1, med, q3 = np.percentile(e, [25, 50, 75])
    return {"median": float(med), "q1": float(q1), "q3": float(q3), "min": float(e.min()), "max": float(e.max())}


@dataclass
class EvalReport:
    per_target: list
    stats: dict
    cable_length: float
    name: str = ""
    failures: int = 0

    @property
    def errors(self) -> np.ndarray:
        return np.array([err for _, trials in self.per_target for _, err in trials])

    def rows(self):
        for i, (target, trials) in enumerate(self.per_target):
            for j, (final, err) in enumerate(trials):
                yield {
                    "target": i, "trial": j, "target_r": target.r, "target_theta": target.theta,
                    "final_x": final[0], "final_y": final[1], "error_m": err,
                    "error_frac": err / self.cable_length,
                }

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "cable_length": self.cable_length,
            "stats": self.stats,
            "failures": self.failures,
            "per_target": [
                {
                    "target": [t.r, t.theta],
                    "trials": [{"final": [float(f[0]), float(f[1])], "error_m": float(e)} for f, e in trials],
                }
                for t, trials in self.per_target
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        per = [
            (PolarPoint(*t["target"]), [(np.array(tr["final"]), tr["error_m"]) for tr in t["trials"]])
            for t in d["per_target"]
        ]
        return cls(per, d["stats"], d["cable_length"], d.get("name", ""), d.get("failures", 0))


def evaluate(
    policy,
    targets: Sequence[PolarPoint],
    truth_params: SimParams,
    trials: int = 5,
    noise: float = 0.0,
    seed: int = 0,
    r0: float = 0.6,
    ws: Workspace | None = None,
    name: str = "",
) -> EvalReport:
    """Execute ``policy`` on every target in the truth simulator.

    ``policy`` is either a callable ``target -> Action`` or an object with a
    ``run(target, params, r0, ws, start)`` method returning the final endpoint.
    With ``noise > 0`` every trial starts from a seeded, smoothly bent reset.
    Trials that cannot be executed count as failures with the reset endpoint
    as their final position.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ws = ws or Workspace()
    reset_end = np.array([r0 + truth_params.cable_length, 0.0])
    per_target = []
    failures = 0
    for ti, target in enumerate(targets):
        goal = _target_xy(target)
        action = None if hasattr(policy, "run") else policy(target)
        results = []
        first_failed = False
        for k in range(trials):
            if noise > 0:
                rng = np.random.default_rng([seed, ti, k])
                start = perturbed_reset(truth_params, r0, noise, rng)
            elif k > 0:
                # noiseless trials are exact repeats
                results.append(results[0])
                failures += first_failed
                continue
            else:
                start = None
            try:
                if action is None:
                    final = np.asarray(policy.run(target, truth_params, r0, ws, start), dtype=float)
                else:
                    final = rollout(action, truth_params, r0, ws, start=start).final
            except (InfeasibleActionError, SimulationDiverged):
                failures += 1
                first_failed = k == 0
                final = reset_end.copy()
            results.append((final, float(np.linalg.norm(final - goal))))
        per_target.append((target, results))
    errors = [e for _, tr in per_target for _, e in tr]
    return EvalReport(per_target, error_stats(errors, truth_params.cable_length), truth_params.cable_length, name, failures)


def nearest_endpoint_distances(targets: Sequence[PolarPoint], endpoints: np.ndarray) -> np.ndarray:
    """Distance from each target to the closest of ``endpoints``."""
    endpoints = np.asarray(endpoints, dtype=float)
    return np.array([np.min(np.linalg.norm(endpoints - _target_xy(t), axis=1)) for t in targets])


def covering_distance(targets: Sequence[PolarPoint], endpoints: np.ndarray) -> float:
    """Largest target-to-nearest-endpoint distance."""
    return float(np.max(nearest_endpoint_distances(targets, endpoints)))
