"""Evaluation metrics, computed from the artifacts a run leaves on disk."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from msslam.errors import LengthMismatch
from msslam.geometry import Pose, wrap_angle
from msslam.maps import LandmarkRecord
from msslam.placerec.align import fit_transform_4dof


def transform_error(estimated: Pose, truth: Pose) -> tuple[float, float]:
    """Translation L2 error (m) and signed yaw error (deg) wrapped to (-180, 180]."""
    pos = float(np.linalg.norm(estimated.translation - truth.translation))
    yaw = math.degrees(float(wrap_angle(estimated.yaw - truth.yaw)))
    return pos, yaw


def ate_rmse(estimated, truth) -> float:
    """Translation RMSE after one 4-DoF alignment of the estimate onto the truth.

    Both arguments are sequences of poses or an (N, 3) array of positions.
    """
    e = _positions(estimated)
    t = _positions(truth)
    if len(e) != len(t):
        raise LengthMismatch(f"trajectory lengths differ: {len(e)} vs {len(t)}")
    if not len(e):
        return 0.0
    fit = fit_transform_4dof(e, t)
    d = fit.pose.act(e) - t
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def _positions(traj) -> np.ndarray:
    if isinstance(traj, np.ndarray):
        return traj.reshape(-1, 3).astype(float)
    traj = list(traj)
    if traj and isinstance(traj[0], Pose):
        return np.array([p.translation for p in traj]).reshape(-1, 3)
    return np.asarray(traj, dtype=float).reshape(-1, 3)


@dataclass(frozen=True)
class PRF:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    vacuous: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def prf_from_counts(tp: int, fp: int, fn: int) -> PRF:
    """Precision, recall and F1; an empty denominator counts as 1.0 and is flagged."""
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    vacuous = (tp + fp == 0) or (tp + fn == 0)
    p = tp / (tp + fp) if tp + fp else 1.0
    r = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return PRF(tp, fp, fn, p, r, f1, vacuous)


def _as_points(items) -> list[tuple[str, np.ndarray]]:
    out = []
    for it in items:
        if isinstance(it, LandmarkRecord):
            out.append((it.label, it.centroid))
        elif isinstance(it, dict):
            out.append((it["class"], LandmarkRecord.from_record(it).centroid))
        else:
            label, c = it
            out.append((label, np.asarray(c, dtype=float)))
    return out


def object_prf(estimated, truth, match_radius: float = 1.0) -> dict[str, PRF]:
    """Per-class TP/FP/FN from greedy one-to-one nearest matching within a radius.

    Items are ``(label, centroid)`` tuples, landmark records or record dicts.
    Matching visits same-class pairs in order of distance; equal distances
    are ordered by coordinates so the result ignores ids and input order.
    The ``"all"`` entry pools every class.
    """
    if match_radius <= 0:
        raise ValueError("match_radius must be positive")
    est = _as_points(estimated)
    tru = _as_points(truth)
    labels = sorted({lab for lab, _ in est} | {lab for lab, _ in tru})
    out: dict[str, PRF] = {}
    tot = [0, 0, 0]
    for lab in labels:
        E = np.array([c for l_, c in est if l_ == lab]).reshape(-1, 3)
        T = np.array([c for l_, c in tru if l_ == lab]).reshape(-1, 3)
        tp = 0
        if len(E) and len(T):
            D = np.linalg.norm(E[:, None, :] - T[None, :, :], axis=2)
            ii, jj = np.nonzero(D <= match_radius)
            keys = sorted(zip(D[ii, jj], [tuple(E[i]) for i in ii], [tuple(T[j]) for j in jj], ii, jj))
            used_e, used_t = set(), set()
            for _, _, _, i, j in keys:
                if i in used_e or j in used_t:
                    continue
                used_e.add(i)
                used_t.add(j)
                tp += 1
        fp, fn = len(E) - tp, len(T) - tp
        out[lab] = prf_from_counts(tp, fp, fn)
        tot[0] += tp
        tot[1] += fp
        tot[2] += fn
    out["all"] = prf_from_counts(*tot)
    return out


# --------------------------------------------------------------------------
# Artifact-driven report
# --------------------------------------------------------------------------

def read_traj_csv(path) -> dict[int, list[Pose]]:
    out: dict[int, list[tuple[int, Pose]]] = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            q = [float(row[k]) for k in ("qw", "qx", "qy", "qz")]
            p = Pose.from_matrix(_qt_matrix(q, [float(row[k]) for k in ("x", "y", "z")]))
            out[int(row["robot_id"])].append((int(row["t"]), p))
    return {k: [p for _, p in sorted(v, key=lambda e: e[0])] for k, v in out.items()}


def _qt_matrix(q, t) -> np.ndarray:
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    m = np.eye(4)
    m[:3, :3] = [[1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                 [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                 [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)]]
    m[:3, 3] = t
    return m


def pose_from_json(v) -> Pose:
    return Pose(np.array(v["rotation"], dtype=float), np.array(v["translation"], dtype=float))


def compute_metrics(run_dir) -> dict:
    """Metrics report recomputed from a run directory's exported files."""
    run = Path(run_dir)
    world = json.loads((run / "world.json").read_text())
    maps = json.loads((run / "map.json").read_text())
    transforms = json.loads((run / "transforms.json").read_text())
    cfg = world.get("metrics", {})
    radius = float(cfg.get("match_radius", 1.0))
    min_views = int(cfg.get("truth_min_views", 3))
    confirmed_only = bool(cfg.get("confirmed_only", True))
    starts = {int(r["robot_id"]): pose_from_json(r["start"]) for r in world["robots"]}

    est_traj = read_traj_csv(run / "traj.csv")
    true_traj = read_traj_csv(run / "traj_truth.csv")
    ate = {}
    raw_ate = {}
    odom_path = run / "odom.csv"
    odom = read_traj_csv(odom_path) if odom_path.exists() else {}
    for rid in sorted(true_traj):
        ate[str(rid)] = ate_rmse(est_traj.get(rid, []), true_traj[rid])
        if rid in odom:
            raw_ate[str(rid)] = ate_rmse(odom[rid], true_traj[rid])

    tf = []
    for e in transforms:
        est = pose_from_json(e["estimated"])
        truth = pose_from_json(e["truth"])
        pos, yaw = transform_error(est, truth)
        tf.append({"host": e["host"], "peer": e["peer"], "position_error": pos, "yaw_error_deg": yaw,
                   "method": e.get("method", ""), "t": e.get("t")})

    objects = {}
    for m in maps["maps"]:
        rid = int(m["robot_id"])
        members = {rid} | {int(p) for p in m.get("merged_peers", [])}
        start = starts[rid]
        est = []
        for rec in m["landmarks"]:
            if confirmed_only and not rec.get("confirmed", True):
                continue
            lm = LandmarkRecord.from_record(rec)
            est.append((lm.label, start.act(lm.centroid)))
        truth = []
        for rec in world["landmarks"]:
            if rec.get("velocity"):
                continue
            views = rec.get("observed_by", {})
            if max((views.get(str(k), 0) for k in members), default=0) < min_views:
                continue
            truth.append((rec["class"], LandmarkRecord.from_record({**rec, "observation_count": 1}).centroid))
        objects[str(rid)] = {k: v.to_dict() for k, v in object_prf(est, truth, radius).items()}

    comm = {"bytes_sent": {}, "messages": 0, "bytes_per_landmark": {}}
    comm_path = run / "comm.csv"
    if comm_path.exists():
        sent: dict[int, int] = defaultdict(int)
        with open(comm_path, newline="") as fh:
            for row in csv.DictReader(fh):
                sent[int(row["sender"])] += int(row["bytes"])
                comm["messages"] += 1
        own_counts = defaultdict(int)
        for m in maps["maps"]:
            for rec in m["landmarks"]:
                if int(rec.get("robot_id", m["robot_id"])) == int(m["robot_id"]):
                    own_counts[int(m["robot_id"])] += 1
        for rid, b in sorted(sent.items()):
            comm["bytes_sent"][str(rid)] = b
            comm["bytes_per_landmark"][str(rid)] = b / own_counts[rid] if own_counts[rid] else None

    hyp = []
    cl_path = run / "closures.json"
    if cl_path.exists():
        for a in json.loads(cl_path.read_text()):
            st = a.get("stats", {})
            if "candidates" in st and st.get("candidates"):
                hyp.append({"host": a["host"], "peer": a["peer"], "candidates": st["candidates"],
                            "all_to_all": st["all_to_all"], "reduction": st["all_to_all"] / st["candidates"]})

    return {"ate_rmse": ate, "odometry_ate_rmse": raw_ate, "transforms": tf, "objects": objects,
            "comm": comm, "hypotheses": hyp}
