"""Staged Real2Sim2Real runner.

Every stage reads its inputs from the run directory and writes its outputs
there, so any stage can be rerun on its own.  The manifest collects paths,
per-stage wall-clock and the headline numbers.
"""
from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..policy import CandidateSet, CastAndPull, ModelPolicy, covering_distance, evaluate, make_targets
from ..regress import ForwardModel, RegressionDataset, combine_datasets, gp_fit, nn_train
from ..sysid import (
    Sim2SimObjective,
    bayes_opt_ei,
    differential_evolution,
    relative_errors,
    subsample_tune_set,
)
from .config import ExperimentConfig
from .datasets import filter_feasible, gen_dataset, read_jsonl, worker_map, write_jsonl

log = logging.getLogger(__name__)

__all__ = ["RunManifest", "StageError", "Run", "run_r2s2r", "POLICIES", "STAGES"]

STAGES = ("reference", "tune", "simulate", "train", "evaluate", "report")
POLICIES = ("r2s2r", "sd", "rd", "gp", "cast_and_pull")


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunManifest:
    config_hash: str
    version: str
    seed: int
    out_dir: str
    outputs: dict = field(default_factory=dict)
    wall_clock: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    tuning: dict = field(default_factory=dict)
    evaluation: dict = field(default_factory=dict)
    policies: list = field(default_factory=list)
    status: str = "running"
    failed_stage: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(**d)

    def save(self, path=None) -> Path:
        path = Path(path or Path(self.out_dir) / "manifest.json")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        return cls.from_dict(json.loads(path.read_text()))

    def content(self) -> dict:
        """Everything except timings and the output location."""
        d = self.to_dict()
        d.pop("wall_clock")
        d.pop("out_dir")
        d["outputs"] = {k: os.path.relpath(v, self.out_dir) for k, v in self.outputs.items()}
        return d

    def missing_outputs(self) -> list:
        return [k for k, p in self.outputs.items() if not Path(p).exists()]


def _save_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True))
    return path


def _load_json(path: Path, stage: str):
    if not path.exists():
        raise FileNotFoundError(f"missing output of stage '{stage}': {path}")
    return json.loads(path.read_text())


def _dataset(records, source):
    return RegressionDataset.from_records(records, source)


class Run:
    """One run directory plus the stage implementations."""

    def __init__(self, config: ExperimentConfig, out_dir, workers: int = 1, reference_file=None, policies=None):
        self.cfg = config
        self.out = Path(out_dir)
        self.workers = max(1, int(workers))
        self.reference_file = reference_file
        self.policies = tuple(policies or config.train["policies"])
        unknown = set(self.policies) - set(POLICIES)
        if unknown:
            raise ValueError(f"unknown policies {sorted(unknown)}")
        self.manifest = RunManifest(config.hash, __version__, config.seed, str(self.out), policies=list(self.policies))

    # paths --------------------------------------------------------------
    def path(self, name: str) -> Path:
        return self.out / name

    @property
    def reference_path(self):
        return self.path("reference.jsonl")

    @property
    def tune_set_path(self):
        return self.path("tune_set.jsonl")

    @property
    def tuning_path(self):
        return self.path("tuning.json")

    @property
    def sim_path(self):
        return self.path("simulated.jsonl")

    def model_path(self, policy):
        return self.path(f"models/{policy}.json")

    def eval_path(self, policy):
        return self.path(f"eval/{policy}.json")

    # stages -------------------------------------------------------------
    def stage_reference(self):
        cfg = self.cfg
        if self.reference_file is not None:
            recs = read_jsonl(self.reference_file)
            write_jsonl(self.reference_path, recs)
            self.manifest.counts["reference"] = {"written": len(recs), "external": str(self.reference_file)}
        else:
            _, counts = gen_dataset(cfg, "reference", cfg.truth_params, self.reference_path, self.workers)
            self.manifest.counts["reference"] = counts
        self.manifest.outputs["reference"] = str(self.reference_path)

    def stage_tune(self):
        cfg = self.cfg
        refs = read_jsonl(self.reference_path)
        tune_set = subsample_tune_set(refs, cfg.k_subsample, cfg.seed)
        write_jsonl(self.tune_set_path, tune_set)
        objective = Sim2SimObjective(tune_set, cfg.param_space, cfg.base_params, cfg.r0, cfg.workspace)
        with worker_map(self.workers, chunksize=1) as pmap:
            if cfg.optimizer == "de":
                result = differential_evolution(objective, cfg.param_space, cfg.de_settings, mapper=pmap)
            else:
                result = bayes_opt_ei(objective, cfg.param_space, cfg.bo_settings, mapper=pmap)
        tuned = cfg.param_space.install(cfg.base_params, result.best)
        _save_json(self.tuning_path, {**result.to_dict(), "params": tuned.to_dict()})
        rel = relative_errors(tuned, cfg.truth_params, cfg.param_space.names)
        self.manifest.tuning = {
            "method": result.method,
            "best_error_m": result.best_error,
            "evaluations": result.evaluations,
            "generations": len(result.history) - 1,
            "params": tuned.to_dict(),
            "relative_errors": rel,
            "max_relative_error": max(rel.values()),
        }
        self.manifest.outputs["tune_set"] = str(self.tune_set_path)
        self.manifest.outputs["tuning"] = str(self.tuning_path)
        log.info("tuned %s, waypoint error %.3g m, relative errors %s", cfg.param_space.names, result.best_error, rel)

    def tuned_params(self):
        d = _load_json(self.tuning_path, "tune")
        return self.cfg.param_space.install(self.cfg.base_params, d["best"])

    def stage_simulate(self):
        params = self.tuned_params()
        _, counts = gen_dataset(self.cfg, "simulated", params, self.sim_path, self.workers)
        self.manifest.counts["simulated"] = counts
        self.manifest.outputs["simulated"] = str(self.sim_path)

    def _train_one(self, policy, ref_data, sim_data):
        cfg = self.cfg
        backend = cfg.train["backend"]
        if policy == "r2s2r":
            data = combine_datasets(ref_data, sim_data, cfg.train["upsample_target"], cfg.train["real_weight"], cfg.seed)
        elif policy == "sd":
            data = sim_data
        elif policy == "rd":
            data = ref_data
        else:
            data = ref_data
            backend = "gp"
        if backend == "gp":
            return gp_fit(data, seed=cfg.seed)
        preset = "reference" if policy == "rd" else cfg.train["preset"]
        return nn_train(data, cfg.nn_config(preset))

    def stage_train(self):
        needs_model = [p for p in self.policies if p != "cast_and_pull"]
        if not needs_model:
            return
        ref_data = _dataset(read_jsonl(self.reference_path), "reference")
        sim_data = None
        if {"r2s2r", "sd"} & set(needs_model):
            if not self.sim_path.exists():
                raise FileNotFoundError(f"missing output of stage 'simulate': {self.sim_path}")
            sim_data = _dataset(read_jsonl(self.sim_path), "simulated")
        for policy in needs_model:
            t0 = time.perf_counter()
            model = self._train_one(policy, ref_data, sim_data)
            _save_json(self.model_path(policy), model.to_dict())
            self.manifest.outputs[f"model_{policy}"] = str(self.model_path(policy))
            log.info("trained %s model in %.1f s", policy, time.perf_counter() - t0)

    def candidates(self) -> CandidateSet:
        cfg = self.cfg
        if cfg.raw["grids"]["candidates"] == cfg.raw["grids"]["simulated"] and self.sim_path.exists():
            actions = [r.action for r in read_jsonl(self.sim_path)]
        else:
            actions = filter_feasible(cfg.grids["candidates"].actions(), cfg.r0, cfg.workspace, self.workers)
        return CandidateSet.from_actions(actions, mirror=True)

    def targets(self):
        e = self.cfg.eval
        sector = tuple(np.radians(e["sector_deg"]))
        return make_targets(int(e["n_targets"]), tuple(e["annulus"]), sector, self.cfg.seed)

    def stage_evaluate(self):
        cfg = self.cfg
        targets = self.targets()
        cands = None
        summary = {}
        for policy in self.policies:
            if policy == "cast_and_pull":
                pol = CastAndPull()
            else:
                if cands is None:
                    cands = self.candidates()
                model = ForwardModel.from_dict(_load_json(self.model_path(policy), "train"))
                pol = ModelPolicy(model, CandidateSet(cands.actions, None, cands.n_canonical), policy)
            report = evaluate(
                pol, targets, cfg.truth_params, int(cfg.eval["trials"]), float(cfg.eval["noise"]),
                cfg.seed, cfg.r0, cfg.workspace, policy,
            )
            _save_json(self.eval_path(policy), report.to_dict())
            self.manifest.outputs[f"eval_{policy}"] = str(self.eval_path(policy))
            summary[policy] = {**report.stats, "failures": report.failures}
            log.info("%s: median error %.1f%% of cable length", policy, 100 * report.stats["median"])
        if self.sim_path.exists():
            # nearest-endpoint oracle over the simulated grid and its mirror image
            recs = read_jsonl(self.sim_path)
            ends = np.array([r.final for r in recs])
            ends = np.concatenate([ends, ends * np.array([1.0, -1.0])])
            summary["oracle_covering_distance"] = covering_distance(targets, ends)
        self.manifest.evaluation = summary

    def stage_report(self):
        from .report import write_report

        paths = write_report(self, self.policies)
        self.manifest.outputs.update(paths)

    # driver -------------------------------------------------------------
    def run_stage(self, stage: str):
        fn = getattr(self, f"stage_{stage}")
        t0 = time.perf_counter()
        try:
            fn()
        except Exception as exc:
            self.manifest.status = "failed"
            self.manifest.failed_stage = stage
            self.manifest.error = f"{type(exc).__name__}: {exc}"
            self.manifest.wall_clock[stage] = time.perf_counter() - t0
            self.manifest.save()
            raise StageError(stage, exc) from exc
        self.manifest.wall_clock[stage] = time.perf_counter() - t0

    def run(self, stages=STAGES) -> RunManifest:
        self.out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        for stage in stages:
            log.info("stage %s", stage)
            self.run_stage(stage)
        self.manifest.wall_clock["total"] = time.perf_counter() - t0
        self.manifest.status = "complete"
        self.manifest.outputs["manifest"] = str(self.out / "manifest.json")
        self.manifest.save()
        return self.manifest


def run_r2s2r(config: ExperimentConfig, out_dir, workers: int = 1, reference_file=None, policies=None) -> RunManifest:
    """Reference data, tuning, simulated data, training, evaluation and report."""
    return Run(config, out_dir, workers, reference_file, policies).run()
