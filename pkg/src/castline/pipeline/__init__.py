"""Configuration, datasets, the staged runner, reports and the command line."""
from .config import DEFAULTS, ExperimentConfig, config_hash, deep_merge, load_config
from .datasets import filter_feasible, gen_dataset, mirror_dataset, read_jsonl, simulate_actions, worker_map, write_jsonl
from .report import confidence_ellipse, scatter_svg, write_report
from .run import POLICIES, STAGES, Run, RunManifest, StageError, run_r2s2r

__all__ = [
    "DEFAULTS", "ExperimentConfig", "config_hash", "deep_merge", "load_config",
    "filter_feasible", "gen_dataset", "mirror_dataset", "read_jsonl", "simulate_actions", "worker_map", "write_jsonl",
    "confidence_ellipse", "scatter_svg", "write_report",
    "POLICIES", "STAGES", "Run", "RunManifest", "StageError", "run_r2s2r",
]
