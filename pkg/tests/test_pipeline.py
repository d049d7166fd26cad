import csv
import json
import math
import shutil

import numpy as np
import pytest
import yaml

from castline.cablesim import reflect_record
from castline.pipeline import (
    DEFAULTS,
    ExperimentConfig,
    Run,
    RunManifest,
    StageError,
    config_hash,
    deep_merge,
    gen_dataset,
    load_config,
    mirror_dataset,
    read_jsonl,
    write_jsonl,
)
from castline.pipeline.cli import main
from castline.pipeline.report import CHI2_95_2DOF, confidence_ellipse, scatter_svg
from castline.policy import EvalReport
from castline.actions import PolarPoint

SMOKE = {
    "grids": {
        "reference": {"freqs": [3, 2, 2, 2, 1]},
        "simulated": {"freqs": [4, 4, 3, 2, 1]},
        "candidates": {"freqs": [4, 4, 3, 2, 1]},
    },
    "tune": {"k_subsample": 3, "de": {"max_generations": 2, "popsize_factor": 5}},
    "train": {"epochs": 5, "policies": ["r2s2r", "sd", "rd", "gp", "cast_and_pull"]},
    "eval": {"n_targets": 4, "trials": 2, "noise": 0.01},
}


@pytest.fixture(scope="module")
def smoke_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "smoke.yaml"
    path.write_text(yaml.safe_dump(SMOKE))
    return path


@pytest.fixture(scope="module")
def smoke_run(smoke_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    run = Run(load_config(smoke_cfg), out)
    run.run()
    return run


# -- configuration ----------------------------------------------------------

def test_config_hash_ignores_key_order():
    a = {"seed": 1, "tune": {"k_subsample": 5, "optimizer": "de"}}
    b = {"tune": {"optimizer": "de", "k_subsample": 5}, "seed": 1}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({**a, "seed": 2})


def test_shipped_config_matches_defaults():
    assert load_config("configs/sim2sim.yaml").hash == ExperimentConfig({}).hash == ExperimentConfig(DEFAULTS).hash


def test_deep_merge_keeps_siblings():
    merged = deep_merge(DEFAULTS, {"tune": {"de": {"max_generations": 3}}})
    assert merged["tune"]["de"]["max_generations"] == 3
    assert merged["tune"]["de"]["recombination"] == DEFAULTS["tune"]["de"]["recombination"]
    assert DEFAULTS["tune"]["de"]["max_generations"] == 200


def test_grid_degrees_become_radians():
    g = ExperimentConfig({}).grids["reference"]
    first = g.actions()[0]
    assert first.theta1 == pytest.approx(math.radians(1.0))
    assert first.r1 == 0.6
    assert g.size == 1000


def test_base_params_default_to_truth():
    cfg = ExperimentConfig({"base_params": {"drag": 0.1}})
    assert cfg.base_params.drag == 0.1
    assert cfg.base_params.mu_d == cfg.truth_params.mu_d
    assert ExperimentConfig({}).base_params == ExperimentConfig({}).truth_params


# -- datasets ---------------------------------------------------------------

def test_jsonl_round_trip_bit_exact(ref_records, tmp_path):
    p = write_jsonl(tmp_path / "r.jsonl", ref_records)
    back = read_jsonl(p)
    assert back == ref_records
    write_jsonl(tmp_path / "s.jsonl", back)
    assert (tmp_path / "s.jsonl").read_bytes() == p.read_bytes()


def test_read_jsonl_reports_line(ref_records, tmp_path):
    p = write_jsonl(tmp_path / "r.jsonl", ref_records[:3])
    with open(p, "a") as fh:
        fh.write("{not json\n")
    with pytest.raises(ValueError, match=r"r\.jsonl:4: bad record"):
        read_jsonl(p)


def test_mirror_dataset(ref_records, tmp_path):
    src = write_jsonl(tmp_path / "a.jsonl", ref_records[:10])
    assert mirror_dataset(src, tmp_path / "b.jsonl") == 10
    assert read_jsonl(tmp_path / "b.jsonl") == [reflect_record(r) for r in ref_records[:10]]
    assert mirror_dataset(tmp_path / "b.jsonl", tmp_path / "c.jsonl", keep_original=True) == 20
    assert read_jsonl(tmp_path / "c.jsonl")[10:] == ref_records[:10]


def test_gen_dataset_independent_of_workers(smoke_cfg):
    cfg = load_config(smoke_cfg)
    one, c1 = gen_dataset(cfg, "reference", cfg.truth_params, workers=1)
    two, c2 = gen_dataset(cfg, "reference", cfg.truth_params, workers=2)
    assert one == two and c1 == c2
    assert c1["grid"] == 24 and c1["written"] == len(one) > 0


# -- report pieces ----------------------------------------------------------

def test_confidence_ellipse_axes():
    rng = np.random.default_rng(0)
    pts = rng.standard_normal((4000, 2)) * (0.02, 0.005)
    centre, axes, angle = confidence_ellipse(pts)
    eig = np.sort(np.linalg.eigvalsh(np.cov(pts.T)))[::-1]
    assert np.allclose(axes, np.sqrt(CHI2_95_2DOF * eig), rtol=1e-9)
    assert np.allclose(centre, pts.mean(axis=0))
    assert abs(math.sin(math.radians(angle))) < 0.05  # degrees, major axis along x


def test_confidence_ellipse_degenerate():
    _, axes, _ = confidence_ellipse(np.tile([1.0, 0.2], (5, 1)))
    assert axes is None


def _report(n_targets, trials, spread):
    per = []
    for i in range(n_targets):
        t = PolarPoint(1.0, 0.2 * i)
        xy = np.array(t.to_cartesian().as_array())
        per.append((t, [(xy + spread * np.array([k, -k]), spread * k) for k in range(trials)]))
    return EvalReport(per, {"median": 0, "q1": 0, "q3": 0, "min": 0, "max": 0}, 0.65, "x")


def test_svg_counts():
    svg = scatter_svg(_report(16, 5, 0.01), 0.55, 0.9, (0.8, 1.25))
    assert svg.count('class="target"') == 16
    assert svg.count('class="trial"') == 80
    assert svg.count('class="ellipse-point"') == 0
    flat = scatter_svg(_report(3, 5, 0.0), 0.55, 0.9)
    assert flat.count('class="ellipse-point"') == 3 and flat.count('class="ellipse"') == 0


# -- staged runs ------------------------------------------------------------

def test_smoke_run_outputs(smoke_run):
    m = RunManifest.load(smoke_run.out)
    assert m.status == "complete" and not m.missing_outputs()
    assert set(m.wall_clock) >= {"reference", "tune", "simulate", "train", "evaluate", "report", "total"}
    for p in ("r2s2r", "sd", "rd", "gp", "cast_and_pull"):
        assert f"eval_{p}" in m.outputs
        with open(smoke_run.out / "report" / f"{p}_trials.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 4 * 2
        assert (smoke_run.out / "report" / f"{p}.svg").read_text().count('class="target"') == 4
    tuning = json.loads((smoke_run.out / "tuning.json").read_text())
    assert all(len(h) == 3 for h in tuning["history"])


def test_generated_records_waypoint_count(smoke_run):
    for name in ("reference.jsonl", "simulated.jsonl"):
        for r in read_jsonl(smoke_run.out / name):
            assert len(r.waypoints) == r.duration_ms // 100


def test_stage_rerun_is_idempotent(smoke_run):
    before = smoke_run.manifest.content()
    snap = {p: (smoke_run.out / f"eval/{p}.json").read_bytes() for p in smoke_run.policies}
    smoke_run.run(("train", "evaluate", "report"))
    assert smoke_run.manifest.content() == before
    assert all((smoke_run.out / f"eval/{p}.json").read_bytes() == b for p, b in snap.items())


def test_missing_output_names_stage(smoke_run, tmp_path):
    out = tmp_path / "partial"
    shutil.copytree(smoke_run.out, out)
    (out / "simulated.jsonl").unlink()
    run = Run(smoke_run.cfg, out)
    with pytest.raises(StageError) as err:
        run.run(("train",))
    assert err.value.stage == "train" and "'simulate'" in str(err.value)
    m = RunManifest.load(out)
    assert m.status == "failed" and m.failed_stage == "train"


# -- command line -----------------------------------------------------------

def test_cli_run_and_report(smoke_cfg, tmp_path, capsys):
    out = tmp_path / "cli"
    assert main(["run", "--config", str(smoke_cfg), "--out", str(out), "--policies", "sd,cast_and_pull"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert set(printed["evaluation"]) >= {"sd", "cast_and_pull"}
    assert main(["report", "--config", str(smoke_cfg), "--out", str(out)]) == 0
    assert (out / "report" / "sd.svg").exists()


def test_cli_gen_dataset_and_mirror(smoke_cfg, tmp_path, capsys):
    assert main(["gen-dataset", "--config", str(smoke_cfg), "--out", str(tmp_path)]) == 0
    ref = tmp_path / "reference.jsonl"
    assert main(["mirror", str(ref), str(tmp_path / "m.jsonl")]) == 0
    assert read_jsonl(tmp_path / "m.jsonl") == [reflect_record(r) for r in read_jsonl(ref)]


def test_cli_errors_are_stage_tagged(smoke_cfg, tmp_path, capsys):
    assert main(["eval", "--config", str(smoke_cfg), "--out", str(tmp_path / "empty")]) != 0
    assert "error: [evaluate]" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "nope.yaml")]) != 0
    assert "error: [config]" in capsys.readouterr().err


def test_cli_rejects_unknown_policy(smoke_cfg):
    with pytest.raises(SystemExit) as err:
        main(["run", "--config", str(smoke_cfg), "--policies", "oracle"])
    assert err.value.code != 0
