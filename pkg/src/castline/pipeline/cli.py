"""Command line front end: ``python -m castline <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ExperimentConfig, deep_merge, load_config
from .datasets import gen_dataset, mirror_dataset
from .run import POLICIES, Run, RunManifest, StageError

log = logging.getLogger("castline")

# stages each subcommand runs, in order
_COMMAND_STAGES = {
    "tune": ("tune",),
    "train": ("train",),
    "eval": ("evaluate",),
    "run": ("reference", "tune", "simulate", "train", "evaluate", "report"),
    "report": ("report",),
}


def _setup_logging():
    level = os.environ.get("CASTLINE_LOG", "WARNING").upper()
    if level.isdigit():
        level = int(level)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig(deep_merge(cfg.raw, {"seed": args.seed}))
    return cfg


def _policies(text):
    names = tuple(p.strip() for p in text.split(",") if p.strip())
    bad = [p for p in names if p not in POLICIES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown policies {bad}; choose from {', '.join(POLICIES)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML experiment configuration")
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--workers", type=int, default=1, help="parallel rollout workers")
    common.add_argument("--out", type=Path, default=Path("runs/default"), help="run directory")
    common.add_argument("--reference-file", type=Path, default=None, help="externally produced reference JSON-lines")
    common.add_argument("--policies", type=_policies, default=None, help="comma separated, e.g. r2s2r,sd,cast_and_pull")

    p = argparse.ArgumentParser(prog="castline", description="Planar cable casting experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen-dataset", parents=[common], help="roll out a grid of actions")
    g.add_argument("--role", choices=("reference", "simulated"), default="reference")
    g.add_argument("--params", choices=("truth", "tuned"), default=None,
                   help="simulator parameters (default: truth for reference, tuned for simulated)")
    sub.add_parser("tune", parents=[common], help="tune the simulator against the reference data")
    sub.add_parser("train", parents=[common], help="train forward models")
    sub.add_parser("eval", parents=[common], help="evaluate policies in the truth simulator")
    sub.add_parser("run", parents=[common], help="full pipeline")
    sub.add_parser("report", parents=[common], help="SVG and CSV output for an evaluated run")
    m = sub.add_parser("mirror", parents=[common], help="reflect a dataset across the x axis")
    m.add_argument("input", type=Path)
    m.add_argument("output", type=Path)
    m.add_argument("--keep", action="store_true", help="also keep the original records")
    return p


def _open_run(args, cfg, fresh=False) -> Run:
    run = Run(cfg, args.out, args.workers, args.reference_file, args.policies)
    path = Path(args.out) / "manifest.json"
    if not fresh and path.exists():
        old = RunManifest.load(path)
        if old.config_hash == cfg.hash:
            old.status = "running"
            old.failed_stage = old.error = None
            if args.policies is None and old.policies:
                run.policies = tuple(old.policies)
            old.policies = list(run.policies)
            run.manifest = old
        else:
            log.warning("config changed since %s was written; starting a new manifest", path)
    return run


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    stage = "config"
    try:
        if args.command == "mirror":
            stage = "mirror"
            n = mirror_dataset(args.input, args.output, args.keep)
            print(f"wrote {n} records to {args.output}")
            return 0
        cfg = _config(args)
        if args.command == "gen-dataset":
            stage = "gen-dataset"
            run = Run(cfg, args.out, args.workers)
            which = args.params or ("truth" if args.role == "reference" else "tuned")
            params = cfg.truth_params if which == "truth" else run.tuned_params()
            path = Path(args.out) / f"{args.role}.jsonl"
            _, counts = gen_dataset(cfg, args.role, params, path, args.workers)
            print(f"{args.role}: {counts['grid']} grid actions, {counts['feasible']} feasible, "
                  f"{counts['written']} written to {path}")
            return 0
        stages = _COMMAND_STAGES[args.command]
        run = _open_run(args, cfg, fresh=args.command == "run")
        if args.command == "tune" and args.reference_file is not None:
            stages = ("reference",) + stages
        manifest = run.run(stages)
        print(json.dumps({"out": str(args.out), "stages": list(stages), "tuning": manifest.tuning,
                          "evaluation": manifest.evaluation}, indent=2, sort_keys=True))
        return 0
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: [{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
