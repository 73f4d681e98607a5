"""SVG overview of a run: trajectories, class-colored landmark glyphs, legend and scale bar."""

from __future__ import annotations

import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from msslam.bench.metrics import pose_from_json, read_traj_csv
from msslam.errors import IoError
from msslam.maps import LandmarkRecord

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#bcbd22")
ROBOT_COLORS = ("#222222", "#0055aa", "#aa3300", "#007744", "#663399")
WIDTH = 800
MARGIN = 40
LEGEND_W = 160


def _nice_length(span: float) -> float:
    """A 1/2/5 x 10^k length close to a fifth of ``span``."""
    target = max(span / 5.0, 1e-6)
    k = 10 ** math.floor(math.log10(target))
    for m in (1, 2, 5, 10):
        if m * k >= target:
            return m * k
    return 10 * k


def _load(run: Path, name: str):
    try:
        return json.loads((run / name).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read {run / name}: {exc}") from exc


def emit_plot(run_dir, out_path=None, robot: int = 0, source: str = "map") -> Path:
    """Write ``overview.svg`` for one robot's frame of a run directory.

    ``source="map"`` draws the robot's final (merged) map; ``"truth"`` draws
    every ground-truth landmark expressed in that robot's start frame.
    """
    if source not in ("map", "truth"):
        raise ValueError("source must be 'map' or 'truth'")
    run = Path(run_dir)
    world = _load(run, "world.json")
    maps = _load(run, "map.json")
    try:
        trajs = read_traj_csv(run / "traj.csv")
    except OSError as exc:
        raise IoError(f"cannot read {run / 'traj.csv'}: {exc}") from exc

    if source == "map":
        entry = next((m for m in maps["maps"] if int(m["robot_id"]) == robot), None)
        lms = [LandmarkRecord.from_record(r) for r in entry["landmarks"]] if entry else []
        paths = {rid: [p.translation for p in trajs[rid]] for rid in trajs if rid == robot}
        if entry:
            for pid in entry.get("merged_peers", []):
                paths[int(pid)] = None
    else:
        starts = {int(r["robot_id"]): pose_from_json(r["start"]) for r in world["robots"]}
        inv = starts[robot].inverse() if robot in starts else None
        lms = []
        for rec in world["landmarks"]:
            lm = LandmarkRecord.from_record({**rec, "observation_count": 1})
            lms.append(lm.transformed(inv) if inv is not None else lm)
        paths = {robot: [p.translation for p in trajs.get(robot, [])]}
    # peers' own trajectories are drawn through the host's estimate of their start
    starts = {int(r["robot_id"]): pose_from_json(r["start"]) for r in world.get("robots", [])}
    tf = {}
    tpath = run / "transforms.json"
    if tpath.exists():
        for e in json.loads(tpath.read_text()):
            if int(e["host"]) == robot:
                tf[int(e["peer"])] = pose_from_json(e["estimated"])
    for pid in list(paths):
        if paths[pid] is None:
            if pid in tf and pid in trajs:
                paths[pid] = [tf[pid].act(p.translation) for p in trajs[pid]]
            else:
                del paths[pid]
    del starts

    labels = sorted({lm.label for lm in lms} | {r["class"] for r in world.get("landmarks", [])})
    color = {lab: PALETTE[i % len(PALETTE)] for i, lab in enumerate(labels)}

    pts = [lm.centroid[:2] for lm in lms] + [np.asarray(p)[:2] for path in paths.values() for p in path]
    if pts:
        P = np.array(pts)
        lo, hi = P.min(axis=0) - 2.0, P.max(axis=0) + 2.0
    else:
        lo, hi = np.array([-10.0, -10.0]), np.array([10.0, 10.0])
    span = float(max(hi - lo))
    scale = (WIDTH - 2 * MARGIN) / span
    height = int(2 * MARGIN + (hi[1] - lo[1]) * scale)

    def xy(p):
        return (MARGIN + (p[0] - lo[0]) * scale, height - MARGIN - (p[1] - lo[1]) * scale)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH + LEGEND_W}" height="{height}" '
           f'viewBox="0 0 {WIDTH + LEGEND_W} {height}">',
           '<rect x="0" y="0" width="100%" height="100%" fill="white"/>']
    # axes through the frame origin when visible, else along the border
    ox, oy = xy((min(max(0.0, lo[0]), hi[0]), min(max(0.0, lo[1]), hi[1])))
    out.append(f'<g class="axes" stroke="#bbbbbb" stroke-width="1">'
               f'<line x1="{MARGIN}" y1="{oy:.2f}" x2="{WIDTH - MARGIN}" y2="{oy:.2f}"/>'
               f'<line x1="{ox:.2f}" y1="{MARGIN}" x2="{ox:.2f}" y2="{height - MARGIN}"/></g>')

    for rid, path in sorted(paths.items()):
        if not len(path):
            continue
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in (xy(p) for p in path))
        out.append(f'<polyline class="trajectory" data-robot="{rid}" fill="none" '
                   f'stroke="{ROBOT_COLORS[rid % len(ROBOT_COLORS)]}" stroke-width="1.5" points="{coords}"/>')

    for lm in lms:
        x, y = xy(lm.centroid)
        c = color[lm.label]
        s = lm.size
        if lm.kind == "cuboid":
            w, h = max(s[0] * scale, 2.0), max(s[1] * scale, 2.0)
            R = lm.shape.pose.rotation
            yaw = -math.degrees(math.atan2(R[1, 0], R[0, 0]))
            out.append(f'<rect class="glyph" x="{x - w / 2:.2f}" y="{y - h / 2:.2f}" width="{w:.2f}" '
                       f'height="{h:.2f}" transform="rotate({yaw:.2f} {x:.2f} {y:.2f})" fill="{c}" '
                       f'fill-opacity="0.6"/>')
        elif lm.kind == "cylinder":
            out.append(f'<circle class="glyph" cx="{x:.2f}" cy="{y:.2f}" r="{max(s[0] * scale, 1.5):.2f}" '
                       f'fill="{c}" fill-opacity="0.6"/>')
        else:
            rx = max(0.5 * s[0] * scale, 1.5)
            out.append(f'<ellipse class="glyph" cx="{x:.2f}" cy="{y:.2f}" rx="{rx:.2f}" ry="{0.6 * rx:.2f}" '
                       f'fill="{c}" fill-opacity="0.6"/>')

    lx = WIDTH + 10
    out.append('<g class="legend" font-family="sans-serif" font-size="12">')
    for i, lab in enumerate(labels):
        yy = MARGIN + 18 * i
        out.append(f'<rect x="{lx}" y="{yy - 9}" width="10" height="10" fill="{color[lab]}"/>'
                   f'<text x="{lx + 16}" y="{yy}">{escape(lab)}</text>')
    for j, rid in enumerate(sorted(paths)):
        yy = MARGIN + 18 * (len(labels) + j + 1)
        out.append(f'<line x1="{lx}" y1="{yy - 4}" x2="{lx + 10}" y2="{yy - 4}" '
                   f'stroke="{ROBOT_COLORS[rid % len(ROBOT_COLORS)]}" stroke-width="2"/>'
                   f'<text x="{lx + 16}" y="{yy}">robot {rid}</text>')
    out.append("</g>")

    bar = _nice_length(span)
    bx, by = MARGIN, height - MARGIN / 2
    out.append(f'<g class="scalebar" font-family="sans-serif" font-size="11">'
               f'<line x1="{bx}" y1="{by:.2f}" x2="{bx + bar * scale:.2f}" y2="{by:.2f}" stroke="black" '
               f'stroke-width="2"/><text x="{bx + bar * scale + 6:.2f}" y="{by + 4:.2f}">{bar:g} m</text></g>')
    out.append("</svg>")

    path = Path(out_path) if out_path is not None else run / "overview.svg"
    try:
        path.write_text("\n".join(out) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path
