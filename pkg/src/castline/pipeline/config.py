"""Experiment configuration: YAML on disk, typed objects in memory.

Angles of the action grids are written in degrees in the file and
converted to radians here.  Everything missing from a user file falls back
to ``DEFAULTS``.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from ..actions import Action, Workspace, grid_sample_actions
from ..cablesim import SimParams
from ..regress import PRESETS, NNConfig
from ..sysid import BOSettings, DESettings, ParamSpace

__all__ = ["DEFAULTS", "ExperimentConfig", "load_config", "config_hash", "deep_merge"]

_SIM_GRID = {
    "theta1_deg": [1.0, 80.0],
    "theta2_deg": [1.0, 80.0],
    "r2": [0.21, 0.77],
    "alpha_deg": [30.0, 60.0],
    "v_max": [2.0, 2.5],
    "freqs": [15, 15, 15, 10, 2],
    "r1": 0.6,
}

DEFAULTS = {
    "seed": 0,
    "r0": 0.6,
    "workspace": {"r_min": 0.55, "r_max": 0.90, "v_joint_max": 3.0, "a_max": 8.0, "j_max": 80.0},
    # hidden ground truth standing in for the physical cable
    "truth_params": {
        "bend_stiffness": 0.1,
        "joint_damping": 1.0,
        "cable_mass": 0.05,
        "endpoint_mass": 0.02,
        "mu_d": 0.2,
        "mu_s": 0.25,
        "n_links": 18,
        "cable_length": 0.65,
        "drag": 0.05,
    },
    # simulator the tuner starts from; tuned fields are overwritten
    "base_params": None,
    "param_space": {
        "bend_stiffness": [0.01, 0.5],
        "cable_mass": [0.01, 0.15],
        "endpoint_mass": [0.005, 0.06],
        "mu_d": [0.05, 0.4],
    },
    "grids": {
        "reference": {
            "theta1_deg": [1.0, 80.0],
            "theta2_deg": [20.0, 80.0],
            "r2": [0.21, 0.77],
            "alpha_deg": [30.0, 60.0],
            "v_max": [2.0, 2.5],
            "freqs": [5, 5, 5, 4, 2],
            "r1": 0.6,
        },
        "simulated": copy.deepcopy(_SIM_GRID),
        "candidates": copy.deepcopy(_SIM_GRID),
    },
    "tune": {
        "k_subsample": 5,
        "optimizer": "de",
        "de": {"popsize_factor": 15, "mutation": [0.5, 1.0], "recombination": 0.7, "tol": 0.01, "atol": 1e-5, "max_generations": 200},
        "bo": {"n_init": 20, "n_iter": 100},
    },
    "train": {
        "backend": "nn",
        "preset": "simulated",
        "epochs": 500,
        "patience": 50,
        "upsample_target": 0.35,
        "real_weight": 2.0,
        "policies": ["r2s2r", "sd", "cast_and_pull"],
    },
    "eval": {
        "n_targets": 16,
        "trials": 5,
        "noise": 0.0,
        "annulus": [0.8, 1.25],
        "sector_deg": [0.0, 90.0],
    },
}


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def config_hash(raw: dict) -> str:
    """Digest of the semantic content; key order and formatting do not matter."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class GridSpec:
    bounds: list
    freqs: list
    r1: float

    @classmethod
    def from_raw(cls, raw: dict) -> "GridSpec":
        rad = math.radians
        bounds = [
            tuple(map(rad, raw["theta1_deg"])),
            tuple(map(rad, raw["theta2_deg"])),
            tuple(raw["r2"]),
            tuple(map(rad, raw["alpha_deg"])),
            tuple(raw["v_max"]),
        ]
        return cls(bounds, [int(f) for f in raw["freqs"]], float(raw.get("r1", 0.6)))

    def actions(self) -> list[Action]:
        return grid_sample_actions(self.bounds, self.freqs, self.r1)

    @property
    def size(self) -> int:
        return math.prod(self.freqs)


class ExperimentConfig:
    """Parsed view of a raw configuration dictionary."""

    def __init__(self, raw: dict | None = None):
        self.raw = deep_merge(DEFAULTS, raw or {})
        r = self.raw
        self.seed = int(r["seed"])
        self.r0 = float(r["r0"])
        self.workspace = Workspace(**r["workspace"])
        self.truth_params = SimParams(**r["truth_params"])
        base = r["base_params"]
        self.base_params = self.truth_params if base is None else SimParams(**deep_merge(r["truth_params"], base))
        ps = r["param_space"]
        self.param_space = ParamSpace(tuple(ps), tuple(tuple(v) for v in ps.values()))
        self.grids = {k: GridSpec.from_raw(v) for k, v in r["grids"].items()}
        t = r["tune"]
        self.k_subsample = int(t["k_subsample"])
        self.optimizer = t["optimizer"]
        if self.optimizer not in ("de", "bo"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        self.de_settings = DESettings(**{**t["de"], "mutation": tuple(t["de"]["mutation"]), "seed": self.seed})
        self.bo_settings = BOSettings(**{**t["bo"], "seed": self.seed})
        tr = r["train"]
        self.train = tr
        if tr["backend"] not in ("nn", "gp"):
            raise ValueError(f"unknown backend {tr['backend']!r}")
        if tr["preset"] not in PRESETS:
            raise ValueError(f"unknown preset {tr['preset']!r}")
        self.eval = r["eval"]

    def nn_config(self, preset: str | None = None) -> NNConfig:
        base = PRESETS[preset or self.train["preset"]]
        return NNConfig(
            hidden_layers=base.hidden_layers,
            hidden_units=base.hidden_units,
            batch_size=base.batch_size,
            learning_rate=base.learning_rate,
            epochs=int(self.train["epochs"]),
            patience=int(self.train["patience"]),
            seed=self.seed,
        )

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    return ExperimentConfig(raw)
