"""JSON-lines trajectory datasets and the worker pool that produces them."""
from __future__ import annotations

import logging
import multiprocessing
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Sequence

from ..actions import DEFAULT_DT, Action, Workspace, build_trajectory, check_feasible
from ..cablesim import SimParams, SimulationDiverged, TrajectoryRecord, reflect_record, rollout

log = logging.getLogger(__name__)

__all__ = ["write_jsonl", "read_jsonl", "worker_map", "gen_dataset", "simulate_actions", "filter_feasible", "mirror_dataset"]


def write_jsonl(path, records: Iterable[TrajectoryRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")
    os.replace(tmp, path)
    return path


def read_jsonl(path) -> list[TrajectoryRecord]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(TrajectoryRecord.from_json(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad record ({exc})") from exc
    return out


@contextmanager
def worker_map(workers: int = 1, chunksize: int = 8):
    """Yield an ordered ``map(fn, items)``; a forked pool when ``workers > 1``.

    Results always come back in input order, so outputs do not depend on
    the worker count.
    """
    if workers is None or workers <= 1:
        yield lambda fn, items: list(map(fn, items))
        return
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(workers) as pool:
        yield lambda fn, items: pool.map(fn, list(items), chunksize=max(1, chunksize))


class _Roll:
    """Picklable rollout job; divergent actions come back as ``None``."""

    def __init__(self, params, r0, ws, dt, source):
        self.params, self.r0, self.ws, self.dt, self.source = params, r0, ws, dt, source

    def __call__(self, a):
        try:
            rec = rollout(a, self.params, self.r0, self.ws, self.dt)
        except SimulationDiverged as exc:
            log.warning("dropping divergent action %s: %s", a.as_tuple(), exc)
            return None
        rec.meta["source"] = self.source
        return rec


class _Feasible:
    def __init__(self, r0, ws, dt):
        self.r0, self.ws, self.dt = r0, ws, dt

    def __call__(self, a):
        return bool(check_feasible(build_trajectory(a, self.r0, self.dt, self.ws), self.ws))


def filter_feasible(actions: Sequence[Action], r0: float, ws: Workspace, workers: int = 1, dt: float = DEFAULT_DT):
    with worker_map(workers, chunksize=256) as pmap:
        keep = pmap(_Feasible(r0, ws, dt), actions)
    return [a for a, k in zip(actions, keep) if k]


def simulate_actions(
    actions: Sequence[Action],
    params: SimParams,
    r0: float = 0.6,
    ws: Workspace | None = None,
    workers: int = 1,
    source: str = "simulated",
    dt: float = DEFAULT_DT,
) -> list[TrajectoryRecord]:
    job = _Roll(params, r0, ws or Workspace(), dt, source)
    with worker_map(workers, chunksize=16) as pmap:
        results = pmap(job, actions)
    return [r for r in results if r is not None]


def gen_dataset(config, role: str, params: SimParams, out_path=None, workers: int = 1):
    """Grid-sample, drop infeasible actions, roll out the rest.

    Returns ``(records, counts)`` where ``counts`` has the grid size, the
    number of feasible actions and the number written.
    """
    if role not in ("reference", "simulated"):
        raise ValueError(f"role must be 'reference' or 'simulated', not {role!r}")
    grid = config.grids[role]
    actions = grid.actions()
    feasible = filter_feasible(actions, config.r0, config.workspace, workers)
    records = simulate_actions(feasible, params, config.r0, config.workspace, workers, role)
    counts = {"grid": len(actions), "feasible": len(feasible), "written": len(records)}
    log.info("%s dataset: %d grid actions, %d feasible, %d written", role, *counts.values())
    if out_path is not None:
        write_jsonl(out_path, records)
    return records, counts


def mirror_dataset(src, dst, keep_original: bool = False) -> int:
    """Write the reflection of every record in ``src`` to ``dst``."""
    recs = read_jsonl(src)
    out = (list(recs) if keep_original else []) + [reflect_record(r) for r in recs]
    write_jsonl(dst, out)
    return len(out)
