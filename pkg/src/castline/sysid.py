"""Simulator parameter identification.

Candidate parameter vectors are scored by replaying reference actions in
the simulator and measuring the average waypoint error.  Two black-box
optimisers are provided: differential evolution (best1bin with dither) and
Bayesian optimisation with an Expected Improvement acquisition on a GP
surrogate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm, qmc

from .actions import InfeasibleActionError, Workspace
from .cablesim import SimParams, SimulationDiverged, TrajectoryRecord, rollout

log = logging.getLogger(__name__)

__all__ = [
    "ParamSpace",
    "TuningResult",
    "DESettings",
    "BOSettings",
    "waypoint_error",
    "tuning_objective",
    "Sim2SimObjective",
    "differential_evolution",
    "bayes_opt_ei",
    "expected_improvement",
    "subsample_tune_set",
    "relative_errors",
    "DIVERGENCE_PENALTY",
]

DIVERGENCE_PENALTY = 10.0
TUNABLE = ("bend_stiffness", "joint_damping", "cable_mass", "endpoint_mass", "mu_d", "mu_s", "drag")


@dataclass(frozen=True)
class ParamSpace:
    names: tuple
    bounds: tuple

    def __post_init__(self):
        names = tuple(self.names)
        bounds = tuple(tuple(map(float, b)) for b in self.bounds)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "bounds", bounds)
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be distinct")
        if len(names) != len(bounds):
            raise ValueError("one (low, high) pair per parameter")
        for n, (lo, hi) in zip(names, bounds):
            if n not in TUNABLE:
                raise ValueError(f"{n!r} is not a tunable SimParams field")
            if not lo < hi:
                raise ValueError(f"bounds for {n} need low < high, got ({lo}, {hi})")

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def install(self, base: SimParams, values: Sequence[float]) -> SimParams:
        """Copy of ``base`` with the named fields replaced.

        When ``mu_d`` is tuned but ``mu_s`` is not, ``mu_s`` keeps its ratio
        to ``mu_d`` so the static coefficient never drops below the dynamic one.
        """
        update = {n: float(v) for n, v in zip(self.names, values)}
        if "mu_d" in update and "mu_s" not in update and base.mu_d > 0:
            update["mu_s"] = update["mu_d"] * base.mu_s / base.mu_d
        return replace(base, **update)

    def extract(self, params: SimParams) -> np.ndarray:
        return np.array([getattr(params, n) for n in self.names])

    def to_dict(self) -> dict:
        return {"names": list(self.names), "bounds": [list(b) for b in self.bounds]}


@dataclass
class TuningResult:
    names: tuple
    best: np.ndarray
    best_error: float
    history: list
    evaluations: int
    seed: int
    best_params: SimParams | None = None
    method: str = "de"

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "best": [float(v) for v in self.best],
            "best_error": float(self.best_error),
            "history": [[int(h[0]), float(h[2]), float(h[3])] for h in self.history],
            # evaluation count and best vector behind every history row
            "trace": [{"evaluations": int(h[1]), "best": [float(v) for v in h[4]]} for h in self.history],
            "seed": int(self.seed),
            "evaluations": int(self.evaluations),
            "method": self.method,
        }

    @classmethod
    def from_dict(cls, d: dict, base: SimParams | None = None, space: ParamSpace | None = None) -> "TuningResult":
        res = cls(
            tuple(d["names"]), np.array(d["best"], dtype=float), float(d["best_error"]),
            [(int(g), tr["evaluations"], float(best), float(mean), np.array(tr["best"], dtype=float))
             for (g, best, mean), tr in zip(d["history"], d["trace"])],
            int(d.get("evaluations", 0)), int(d["seed"]),
            method=d.get("method", "de"),
        )
        if base is not None and space is not None:
            res.best_params = space.install(base, res.best)
        return res

    def best_within(self, budget: int):
        """Best vector and error found using at most ``budget`` evaluations."""
        seen = [h for h in self.history if h[1] <= budget]
        if not seen:
            raise ValueError(f"no history entry within {budget} evaluations")
        h = min(seen, key=lambda e: (e[2], e[1]))
        return np.array(h[4]), float(h[2])


def relative_errors(estimate: SimParams, truth: SimParams, names: Sequence[str]) -> dict:
    return {n: abs(getattr(estimate, n) - getattr(truth, n)) / abs(getattr(truth, n)) for n in names}


# ---------------------------------------------------------------------------
# objective


def waypoint_error(sim: TrajectoryRecord, ref: TrajectoryRecord) -> float:
    """Mean endpoint distance over matched waypoints plus the final resting point."""
    k = min(len(sim.waypoints), len(ref.waypoints))
    if len(sim.waypoints) == 0 or len(ref.waypoints) == 0:
        raise ValueError("both records need at least one waypoint")
    d = np.linalg.norm(sim.waypoints[:k] - ref.waypoints[:k], axis=1)
    d = np.append(d, np.linalg.norm(sim.final - ref.final))
    # shifted mean: exact when every term is equal
    return float(d[0] + (d - d[0]).sum() / (k + 1))


def tuning_objective(
    candidate: Sequence[float],
    refs: Sequence[TrajectoryRecord],
    space: ParamSpace,
    base: SimParams,
    r0: float = 0.6,
    ws: Workspace | None = None,
) -> float:
    """Batch-averaged waypoint error of ``candidate`` against ``refs``.

    Rollouts that blow up or cannot be executed score ``DIVERGENCE_PENALTY``.
    """
    if len(refs) == 0:
        raise ValueError("need at least one reference trajectory")
    try:
        params = space.install(base, candidate)
    except ValueError:
        return DIVERGENCE_PENALTY
    total = 0.0
    for ref in refs:
        try:
            sim = rollout(ref.action, params, r0, ws)
            total += waypoint_error(sim, ref)
        except (SimulationDiverged, InfeasibleActionError):
            total += DIVERGENCE_PENALTY
    return total / len(refs)


@dataclass
class Sim2SimObjective:
    """Picklable objective for process pools."""

    refs: list
    space: ParamSpace
    base: SimParams
    r0: float = 0.6
    ws: Workspace = field(default_factory=Workspace)

    def __call__(self, x):
        return tuning_objective(x, self.refs, self.space, self.base, self.r0, self.ws)


# ---------------------------------------------------------------------------
# differential evolution


@dataclass(frozen=True)
class DESettings:
    popsize_factor: int = 15
    mutation: tuple = (0.5, 1.0)
    recombination: float = 0.7
    tol: float = 0.01
    atol: float = 0.0
    max_generations: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.popsize_factor < 4:
            raise ValueError("popsize_factor must be >= 4")
        lo, hi = self.mutation
        if not 0 <= lo <= hi <= 2:
            raise ValueError("mutation range must satisfy 0 <= low <= high <= 2")
        if not 0 <= self.recombination <= 1:
            raise ValueError("recombination must lie in [0, 1]")


def _evaluate(objective, points, mapper):
    return np.array(list(mapper(objective, [p.copy() for p in points])), dtype=float)


def differential_evolution(
    objective: Callable[[np.ndarray], float],
    space: ParamSpace | Sequence[tuple],
    settings: DESettings | None = None,
    mapper: Callable = map,
    callback: Callable | None = None,
) -> TuningResult:
    """Minimise ``objective`` over the box ``space`` with DE/best/1/bin.

    The whole trial population is built from the generation's best member
    before any of it is evaluated, so ``mapper`` may evaluate the batch in
    parallel; results are consumed in member order.
    """
    settings = settings or DESettings()
    if not isinstance(space, ParamSpace):
        bounds = np.asarray(space, dtype=float)
        names = tuple(f"x{i}" for i in range(len(bounds)))
        lower, upper = bounds[:, 0], bounds[:, 1]
        if np.any(lower >= upper):
            raise ValueError("bounds need low < high")
    else:
        names, lower, upper = space.names, space.lower, space.upper
    dim = len(lower)
    rng = np.random.default_rng(settings.seed)
    n_pop = settings.popsize_factor * dim

    unit = qmc.LatinHypercube(d=dim, seed=rng).random(n_pop)
    pop = lower + unit * (upper - lower)
    energies = _evaluate(objective, pop, mapper)
    evaluations = n_pop
    best = int(np.argmin(energies))
    history = [(0, evaluations, float(energies[best]), float(np.mean(energies)), pop[best].copy())]

    for gen in range(1, settings.max_generations + 1):
        f_scale = rng.uniform(*settings.mutation)
        trials = np.empty_like(pop)
        for i in range(n_pop):
            choices = [j for j in range(n_pop) if j != i]
            a, b = rng.choice(choices, 2, replace=False)
            mutant = pop[best] + f_scale * (pop[a] - pop[b])
            cross = rng.random(dim) < settings.recombination
            cross[rng.integers(dim)] = True
            trials[i] = np.clip(np.where(cross, mutant, pop[i]), lower, upper)
        trial_energy = _evaluate(objective, trials, mapper)
        evaluations += n_pop
        better = trial_energy <= energies
        pop[better] = trials[better]
        energies[better] = trial_energy[better]
        best = int(np.argmin(energies))
        history.append((gen, evaluations, float(energies[best]), float(np.mean(energies)), pop[best].copy()))
        if callback is not None:
            callback(gen, pop[best].copy(), float(energies[best]))
        log.debug("DE generation %d: best %.6g mean %.6g", gen, energies[best], np.mean(energies))
        if np.std(energies) <= settings.atol + settings.tol * abs(np.mean(energies)):
            break

    return TuningResult(names, pop[best].copy(), float(energies[best]), history, evaluations, settings.seed)


# ---------------------------------------------------------------------------
# Bayesian optimisation


@dataclass(frozen=True)
class BOSettings:
    n_init: int = 20
    n_iter: int = 100
    seed: int = 0
    n_candidates: int = 4096
    n_refine: int = 8
    refit_every: int = 10
    # surrogate size cap for long runs; None keeps every point
    max_points: int | None = None

    def __post_init__(self):
        if self.n_init < 2:
            raise ValueError("n_init must be >= 2")
        if self.max_points is not None and self.max_points < 2:
            raise ValueError("max_points must be >= 2")


def _surrogate_subset(y: np.ndarray, cap: int | None, rng) -> np.ndarray:
    """Indices the GP is fit on: all of them, or the best half of ``cap`` plus a random draw of the rest."""
    n = len(y)
    if cap is None or n <= cap:
        return np.arange(n)
    order = np.argsort(y, kind="stable")
    keep = order[: cap // 2]
    rest = rng.choice(order[cap // 2 :], cap - cap // 2, replace=False)
    return np.sort(np.concatenate([keep, rest]))


def expected_improvement(mu, sigma, best, xi: float = 0.0):
    """EI for minimisation; zero where the predictive spread vanishes."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    imp = best - mu - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        z = imp / sigma
        ei = imp * norm.cdf(z) + sigma * norm.pdf(z)
    return np.where(sigma > 0, np.maximum(ei, 0.0), 0.0)


def bayes_opt_ei(
    objective: Callable[[np.ndarray], float],
    space: ParamSpace | Sequence[tuple],
    settings: BOSettings | None = None,
    mapper: Callable = map,
) -> TuningResult:
    """Minimise ``objective`` with a GP surrogate and Expected Improvement.

    The GP posterior is refit after every evaluation; kernel
    hyperparameters are re-estimated every ``refit_every`` iterations.
    With ``max_points`` set, the surrogate sees at most that many points.
    The acquisition is maximised over seeded random candidates, then
    refined locally around the best few.
    """
    from .regress import GPRegressor

    settings = settings or BOSettings()
    if isinstance(space, ParamSpace):
        names, lower, upper = space.names, space.lower, space.upper
    else:
        bounds = np.asarray(space, dtype=float)
        names = tuple(f"x{i}" for i in range(len(bounds)))
        lower, upper = bounds[:, 0], bounds[:, 1]
    dim = len(lower)
    rng = np.random.default_rng(settings.seed)
    span = upper - lower

    u = qmc.LatinHypercube(d=dim, seed=rng).random(settings.n_init)
    X = list(u)
    y = list(_evaluate(objective, lower + u * span, mapper))
    history = [(0, len(y), float(min(y)), float(np.mean(y)), lower + X[int(np.argmin(y))] * span)]
    gp = GPRegressor(seed=settings.seed)
    hyper = None
    sub_rng = np.random.default_rng([settings.seed, 1])
    for it in range(1, settings.n_iter + 1):
        ya_all = np.array(y)
        idx = _surrogate_subset(ya_all, settings.max_points, sub_rng)
        Xa = np.array(X)[idx]
        ya = ya_all[idx]
        if hyper is None or (it - 1) % settings.refit_every == 0:
            gp.fit(Xa, ya, optimize=True)
            hyper = gp.hyperparameters
        else:
            gp.fit(Xa, ya, optimize=False, hyperparameters=hyper)
        incumbent = float(ya_all.min())

        def acq(points):
            mu, var = gp.predict(points, return_var=True)
            return expected_improvement(mu, np.sqrt(np.maximum(var, 0.0)), incumbent)

        cand = rng.random((settings.n_candidates, dim))
        scores = acq(cand)
        top = np.argsort(-scores, kind="stable")[: settings.n_refine]
        local = []
        for k in top:
            radius = 0.05
            local.append(np.clip(cand[k] + radius * rng.standard_normal((64, dim)), 0.0, 1.0))
        local = np.concatenate(local)
        pool = np.concatenate([cand, local])
        pool_scores = np.concatenate([scores, acq(local)])
        nxt = pool[int(np.argmax(pool_scores))]
        value = float(next(iter(mapper(objective, [lower + nxt * span]))))
        X.append(nxt)
        y.append(value)
        history.append((it, len(y), float(min(y)), float(np.mean(y)), lower + X[int(np.argmin(y))] * span))
        log.debug("BO iteration %d: f=%.6g best=%.6g", it, value, min(y))

    ya = np.array(y)
    best = int(np.argmin(ya))
    return TuningResult(
        names, lower + np.array(X[best]) * span, float(ya[best]), history, len(y), settings.seed, method="bo"
    )


def subsample_tune_set(dataset: Sequence, k: int = 20, seed: int = 0) -> list:
    """Seeded uniform sample without replacement, kept in dataset order."""
    if k > len(dataset):
        raise ValueError(f"cannot draw {k} items from {len(dataset)}")
    if k < 0:
        raise ValueError("k must be non-negative")
    idx = np.sort(np.random.default_rng(seed).choice(len(dataset), size=k, replace=False))
    return [dataset[i] for i in idx]
