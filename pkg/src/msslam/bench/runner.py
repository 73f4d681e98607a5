"""End-to-end simulation of a scenario and export of its artifacts."""

from __future__ import annotations

import csv
import json
import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from msslam.bench.metrics import compute_metrics
from msslam.bench.scenario import Scenario, load_scenario
from msslam.geometry import Pose
from msslam.rng import make_rng
from msslam.swarm.agent import RobotAgent
from msslam.swarm.comm import step_comm
from msslam.worldsim.sensor import simulate_detections
from msslam.worldsim.trajectory import Trajectory, generate_trajectory

log = logging.getLogger(__name__)

TRAJ_FIELDS = ["robot_id", "t", "x", "y", "z", "qw", "qx", "qy", "qz"]


@dataclass
class RunResult:
    out_dir: Path
    metrics: dict
    agents: list[RobotAgent] = field(default_factory=list)
    trajectories: list[Trajectory] = field(default_factory=list)
    world: object = None
    timing: dict = field(default_factory=dict)


def _pose_json(p: Pose) -> dict:
    return {"rotation": p.rotation.tolist(), "translation": p.translation.tolist(), "xyz_yaw": [float(v) for v in p.xyz_yaw()]}


def _traj_rows(rid: int, poses) -> list[dict]:
    rows = []
    for t, p in enumerate(poses):
        q = p.quaternion()
        x, y, z = p.translation
        rows.append({"robot_id": rid, "t": t, "x": repr(float(x)), "y": repr(float(y)), "z": repr(float(z)),
                     "qw": repr(float(q[0])), "qx": repr(float(q[1])), "qy": repr(float(q[2])),
                     "qz": repr(float(q[3]))})
    return rows


def _write_csv(path: Path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _observations(world, trajs, sensors) -> dict[int, dict[str, int]]:
    """Number of key poses at which each landmark lies in each robot's frustum."""
    out: dict[int, dict[str, int]] = defaultdict(dict)
    for rid, (tr, sensor) in enumerate(zip(trajs, sensors)):
        counts = np.zeros(len(world.landmarks), dtype=int)
        for t, pose in enumerate(tr.true_poses):
            cents = np.array([lm.at_time(float(t)).centroid for lm in world.landmarks]).reshape(-1, 3)
            if not len(cents):
                break
            body = pose.inverse().act(cents)
            counts += sensor.in_frustum(body).astype(int)
        for lm, c in zip(world.landmarks, counts):
            if c:
                out[lm.id][str(rid)] = int(c)
    return out


def simulate(scenario: Scenario):
    """Run the swarm over the scenario; returns agents, trajectories, world and comm log."""
    world = scenario.build_world()
    trajs = [generate_trajectory(r.waypoints, r.key_pose_spacing, r.odom_noise, make_rng(scenario.seed, "odometry", r.id))
             for r in scenario.robots]
    det_rngs = [make_rng(scenario.seed, "detections", r.id) for r in scenario.robots]
    agents = [RobotAgent(r.id, scenario.agent) for r in scenario.robots]
    horizon = max(len(t) for t in trajs)
    sched = scenario.schedule(horizon)
    end = max([horizon] + [t + 1 for t in sched.times()])
    period = scenario.agent.loop_closure_period
    comm_log = []
    timing = defaultdict(float)
    try:
        for t in range(end):
            t0 = time.perf_counter()
            for a in agents:
                a.join_loop_closures()
            timing["place_recognition_join"] += time.perf_counter() - t0
            t0 = time.perf_counter()
            for r, a, tr, rng in zip(scenario.robots, agents, trajs, det_rngs):
                if t >= len(tr):
                    continue
                dets = simulate_detections(tr.true_poses[t], world, r.sensor, rng, key_pose=t, time=float(t))
                odom = tr.odometry[0].inverse() @ tr.odometry[t]
                a.step(odom, dets)
            timing["mapping"] += time.perf_counter() - t0
            t0 = time.perf_counter()
            comm_log.extend(step_comm(sched, t, agents))
            timing["communication"] += time.perf_counter() - t0
            if t % period == 0:
                for a in agents:
                    a.schedule_loop_closures(float(t))
        t0 = time.perf_counter()
        for a in agents:
            a.join_loop_closures()
        for a in agents:
            for pid in sorted(a.peers):
                a.attempt_loop_closure(pid, float(end))
        for a in agents:
            a.optimize()
        timing["final"] += time.perf_counter() - t0
    finally:
        for a in agents:
            a.close()
    return agents, trajs, world, comm_log, dict(timing)


def export(out_dir: Path, scenario: Scenario, agents, trajs, world, comm_log) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    starts = {r.id: tr.true_poses[0] for r, tr in zip(scenario.robots, trajs)}

    maps = []
    for a in agents:
        merged = sorted(pid for pid, p in a.peers.items() if p.transform is not None)
        maps.append({"robot_id": a.robot_id, "merged_peers": merged, "landmarks": a.graph.landmark_records(),
                     "factor_counts": a.graph.factor_counts()})
    (out_dir / "map.json").write_text(json.dumps({"maps": maps}, indent=1))

    rows = []
    for a in agents:
        rows += _traj_rows(a.robot_id, a.graph.trajectory(a.robot_id))
    _write_csv(out_dir / "traj.csv", TRAJ_FIELDS, rows)
    rows, odo = [], []
    for r, tr in zip(scenario.robots, trajs):
        start = starts[r.id]
        rows += _traj_rows(r.id, [start.inverse() @ p for p in tr.true_poses])
        odo += _traj_rows(r.id, [tr.odometry[0].inverse() @ p for p in tr.odometry])
    _write_csv(out_dir / "traj_truth.csv", TRAJ_FIELDS, rows)
    _write_csv(out_dir / "odom.csv", TRAJ_FIELDS, odo)

    obs = _observations(world, trajs, [r.sensor for r in scenario.robots])
    lms = []
    for lm in world.landmarks:
        rec = lm.to_record()
        rec["observed_by"] = obs.get(lm.id, {})
        lms.append(rec)
    (out_dir / "world.json").write_text(json.dumps({
        "seed": scenario.seed,
        "landmarks": lms,
        "robots": [{"robot_id": r.id, "start": _pose_json(starts[r.id])} for r in scenario.robots],
        "metrics": scenario.metrics,
    }, indent=1))

    tfs = []
    for a in agents:
        for pid in sorted(a.peers):
            p = a.peers[pid]
            if p.transform is None:
                continue
            truth = starts[a.robot_id].inverse() @ starts[pid]
            method = next((c.method for c in a.closures if c.peer == pid and c.success), "")
            tfs.append({"host": a.robot_id, "peer": pid, "t": p.transform_time, "method": method,
                        "estimated": _pose_json(p.transform), "truth": _pose_json(truth)})
    (out_dir / "transforms.json").write_text(json.dumps(tfs, indent=1))

    _write_csv(out_dir / "comm.csv", ["t", "sender", "receiver", "bytes", "records"],
               [{"t": c.t, "sender": c.sender, "receiver": c.receiver, "bytes": c.bytes, "records": c.records}
                for c in comm_log])

    closures = []
    for a in agents:
        for c in a.closures:
            st = {k: v for k, v in c.stats.items() if k != "elapsed_ms"}
            closures.append({"host": a.robot_id, "peer": c.peer, "t": c.t, "method": c.method,
                             "success": c.success, "stats": st})
    (out_dir / "closures.json").write_text(json.dumps(closures, indent=1))


def run_scenario(source, out_dir=None, seed: int | None = None, algo: str | None = None,
                 plot: bool = True) -> RunResult:
    """Simulate, export artifacts and compute the metrics report from them."""
    scenario = source if isinstance(source, Scenario) else load_scenario(source)
    scenario = scenario.with_overrides(seed=seed, algo=algo)
    out = Path(out_dir) if out_dir is not None else Path("runs") / f"{scenario.name}-seed{scenario.seed}"
    t0 = time.perf_counter()
    agents, trajs, world, comm_log, timing = simulate(scenario)
    export(out, scenario, agents, trajs, world, comm_log)
    metrics = compute_metrics(out)
    (out / "metrics.json").write_text(json.dumps(metrics, indent=1, sort_keys=True))
    if plot:
        from msslam.bench.plot import emit_plot

        emit_plot(out)
    timing["total"] = time.perf_counter() - t0
    (out / "timing.json").write_text(json.dumps(timing, indent=1, sort_keys=True))
    for h in metrics["hypotheses"]:
        log.info("robot %d vs %d: %d hypotheses instead of %d (%.1fx fewer)", h["host"], h["peer"],
                 h["candidates"], h["all_to_all"], h["reduction"])
    return RunResult(out, metrics, agents, trajs, world, timing)
