"""SVG scatter plots and CSV tables for a finished run."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..policy import EvalReport

__all__ = ["write_report", "scatter_svg", "confidence_ellipse", "CHI2_95_2DOF"]

CHI2_95_2DOF = 5.991
_DEGENERATE = 1e-12
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#e377c2"]


def confidence_ellipse(points):
    """95% ellipse of a 2-D point cloud as ``(centre, (a, b), angle_deg)``.

    Returns ``None`` for the axes when the spread is zero.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    centre = pts.mean(axis=0)
    if len(pts) < 2:
        return centre, None, 0.0
    cov = np.cov(pts.T)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    if vals[-1] <= _DEGENERATE:
        return centre, None, 0.0
    a, b = np.sqrt(CHI2_95_2DOF * vals[::-1])
    angle = math.degrees(math.atan2(vecs[1, -1], vecs[0, -1]))
    return centre, (float(a), float(b)), angle


def _star(cx, cy, r):
    pts = []
    for k in range(10):
        rad = r if k % 2 == 0 else 0.45 * r
        ang = math.pi / 2 + k * math.pi / 5
        pts.append(f"{cx + rad * math.cos(ang):.2f},{cy - rad * math.sin(ang):.2f}")
    return " ".join(pts)


def scatter_svg(report: EvalReport, r_min: float, r_max: float, annulus=None, size: int = 560) -> str:
    """Targets as stars, trial endpoints as dots, one ellipse per target."""
    ends = [f for _, trials in report.per_target for f, _ in trials]
    tgt = [t.to_cartesian() for t, _ in report.per_target]
    xs = [p[0] for p in ends] + [t.x for t in tgt] + [0.0, r_max]
    ys = [p[1] for p in ends] + [t.y for t in tgt] + [0.0, r_max]
    lo = min(min(xs), min(ys)) - 0.1
    hi = max(max(xs), max(ys)) + 0.1
    margin = 30
    scale = (size - 2 * margin) / (hi - lo)

    def px(x, y):
        return margin + (x - lo) * scale, size - margin - (y - lo) * scale

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<title>{report.name}: median error {100 * report.stats["median"]:.1f}% of cable length</title>',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    ox, oy = px(0.0, 0.0)
    out.append(f'<circle class="base" cx="{ox:.2f}" cy="{oy:.2f}" r="4" fill="black"/>')
    radii = [("workspace", r_min), ("workspace", r_max)]
    if annulus is not None:
        radii += [("annulus", annulus[0]), ("annulus", annulus[1])]
    for cls, r in radii:
        rr = r * scale
        dash = ' stroke-dasharray="4 3"' if cls == "annulus" else ""
        out.append(
            f'<circle class="{cls}" cx="{ox:.2f}" cy="{oy:.2f}" r="{rr:.2f}" fill="none" stroke="#888"{dash}/>'
        )
    for i, (target, trials) in enumerate(report.per_target):
        color = _COLORS[i % len(_COLORS)]
        pts = np.array([f for f, _ in trials])
        centre, axes, angle = confidence_ellipse(pts)
        cx, cy = px(*centre)
        if axes is None:
            out.append(f'<circle class="ellipse-point" cx="{cx:.2f}" cy="{cy:.2f}" r="2.5" fill="none" stroke="{color}"/>')
        else:
            out.append(
                f'<ellipse class="ellipse" cx="{cx:.2f}" cy="{cy:.2f}" rx="{axes[0] * scale:.2f}" '
                f'ry="{axes[1] * scale:.2f}" transform="rotate({-angle:.3f} {cx:.2f} {cy:.2f})" '
                f'fill="{color}" fill-opacity="0.15" stroke="{color}"/>'
            )
        for p in pts:
            dx, dy = px(*p)
            out.append(f'<circle class="trial" cx="{dx:.2f}" cy="{dy:.2f}" r="2" fill="{color}"/>')
        t = target.to_cartesian()
        sx, sy = px(t.x, t.y)
        out.append(f'<polygon class="target" points="{_star(sx, sy, 7)}" fill="{color}" stroke="black"/>')
    out.append("</svg>")
    return "\n".join(out)


def _write_csv(path: Path, rows, header):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def write_report(run, policies=None) -> dict:
    """Emit SVG/CSV files for every evaluated policy plus the tuning history.

    ``run`` is a :class:`~castline.pipeline.run.Run`.  Missing stage outputs
    raise ``FileNotFoundError`` naming the stage.
    """
    cfg = run.cfg
    out_dir = run.path("report")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for policy in policies or run.policies:
        path = run.eval_path(policy)
        if not path.exists():
            raise FileNotFoundError(f"missing output of stage 'evaluate' for policy {policy}: {path}")
        report = EvalReport.from_dict(json.loads(path.read_text()))
        svg = out_dir / f"{policy}.svg"
        svg.write_text(
            scatter_svg(report, cfg.workspace.r_min, cfg.workspace.r_max, tuple(cfg.eval["annulus"]))
        )
        csv_path = out_dir / f"{policy}_trials.csv"
        rows = list(report.rows())
        _write_csv(csv_path, rows, list(rows[0]) if rows else ["target", "trial"])
        written[f"svg_{policy}"] = str(svg)
        written[f"csv_{policy}"] = str(csv_path)
    if run.tuning_path.exists():
        result = json.loads(run.tuning_path.read_text())
        names = result["names"]
        rows = [
            {"step": g, "evaluations": tr["evaluations"], "best_error_m": best, "mean_error_m": mean,
             **dict(zip(names, tr["best"]))}
            for (g, best, mean), tr in zip(result["history"], result["trace"])
        ]
        hist = out_dir / "tuning_history.csv"
        _write_csv(hist, rows, ["step", "evaluations", "best_error_m", "mean_error_m", *names])
        written["csv_tuning_history"] = str(hist)
    return written
