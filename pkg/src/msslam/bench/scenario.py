"""Scenario files: schema validation and conversion to runtime configs."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema

from msslam.backend.graph import BackendConfig, NoiseConfig
from msslam.backend.solver import SolverConfig
from msslam.errors import ConfigError
from msslam.maps import AssociationConfig
from msslam.placerec.slidegraph import SlideGraphConfig
from msslam.swarm.agent import AgentConfig, SlideMatchConfig, TrackerConfig
from msslam.swarm.comm import CommSchedule
from msslam.worldsim.sensor import SensorModel
from msslam.worldsim.world import World, WorldSpec, generate_world, load_world

BUNDLED = ("minimal", "loop-100", "two-robot-overlap", "three-robot", "forest-860")


def _schema() -> dict:
    return json.loads(resources.files("msslam.scenarios").joinpath("scenario.schema.json").read_text())


def _path_str(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def validate(data: dict) -> None:
    """Raise :class:`ConfigError` naming the offending field of an invalid scenario."""
    validator = jsonschema.Draft7Validator(_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        path = _path_str(err.absolute_path)
        raise ConfigError(err.message, path)
    ids = sorted(r["id"] for r in data["robots"])
    if ids != list(range(len(ids))):
        raise ConfigError("ids must be dense 0..K-1", "robots")
    for entry_i, e in enumerate(data.get("comm", {}).get("schedule", [])):
        for pair_i, (a, b) in enumerate(e["pairs"]):
            if a == b or a >= len(ids) or b >= len(ids):
                path = f"comm.schedule[{entry_i}].pairs[{pair_i}]"
                raise ConfigError(f"invalid robot pair ({a}, {b})", path)


def sensor_from_dict(d: dict) -> SensorModel:
    return SensorModel(
        max_range=float(d.get("max_range", 15.0)),
        min_range=float(d.get("min_range", 0.3)),
        hfov=math.radians(float(d.get("hfov_deg", 360.0))),
        vfov=math.radians(float(d.get("vfov_deg", 90.0))),
        position_noise_sigma=float(d.get("position_noise_sigma", 0.0)),
        dimension_noise_sigma=float(d.get("dimension_noise_sigma", 0.0)),
        yaw_noise_sigma=math.radians(float(d.get("yaw_noise_sigma_deg", 0.0))),
        false_negative_rate=float(d.get("false_negative_rate", 0.0)),
        false_positive_rate=float(d.get("false_positive_rate", 0.0)),
        mode=d.get("mode", "parametric"),
        points_per_object=int(d.get("points_per_object", 60)),
    )


@dataclass(frozen=True)
class RobotSpec:
    id: int
    waypoints: tuple
    key_pose_spacing: float
    odom_noise: object
    sensor: SensorModel


@dataclass
class Scenario:
    name: str
    seed: int
    world: dict
    robots: list[RobotSpec]
    agent: AgentConfig
    comm: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    base_dir: Path | None = None
    raw: dict = field(default_factory=dict)

    @property
    def n_robots(self) -> int:
        return len(self.robots)

    def build_world(self) -> World:
        if "file" in self.world:
            p = Path(self.world["file"])
            if not p.is_absolute() and self.base_dir is not None:
                p = self.base_dir / p
            return load_world(p, seed=self.seed)
        return generate_world(WorldSpec.from_dict(self.world), self.seed)

    def schedule(self, horizon: int) -> CommSchedule:
        """Comm schedule; with ``final_exchange`` every pair also talks once after traversal."""
        c = self.comm
        sched = CommSchedule.from_json(self.n_robots, c.get("schedule", []))
        if "period" in c:
            for t in range(0, horizon, int(c["period"])):
                sched.add(t, [(i, j) for i in range(self.n_robots) for j in range(i + 1, self.n_robots)])
        if c.get("final_exchange", True) and self.n_robots > 1:
            sched.add(horizon, [(i, j) for i in range(self.n_robots) for j in range(i + 1, self.n_robots)])
        return sched

    def with_overrides(self, seed: int | None = None, algo: str | None = None) -> "Scenario":
        s = copy.copy(self)
        if seed is not None:
            s.seed = int(seed)
        if algo is not None:
            s.agent = replace(self.agent, algo=algo)
        return s


def agent_config(data: dict) -> AgentConfig:
    be = data.get("backend", {})
    spacing = min(r.get("key_pose_spacing", 1.0) for r in data["robots"])
    backend = BackendConfig(
        # every simulated key pose is kept; the graph spacing only gates raw odometry feeds
        key_pose_spacing=0.5 * spacing,
        association=AssociationConfig.from_dict(be.get("association", {})),
        noise=NoiseConfig.from_dict(be.get("noise", {})),
        ellipsoid_alpha=float(be.get("ellipsoid_alpha", 0.2)),
    )
    solver = SolverConfig(max_iters=int(be.get("max_iters", 50)),
                          lambda_init=float(be.get("lambda_init", 1e-4)),
                          convergence_tol=float(be.get("convergence_tol", 1e-10)),
                          jacobian=be.get("jacobian", "analytic"))
    tr = data.get("tracker", {})
    tracker = TrackerConfig(gate=float(tr.get("gate", 1.0)), confirm_threshold=int(tr.get("confirm_threshold", 3)),
                            max_age=int(tr.get("max_age", 5)),
                            class_max_extent={k: float(v) for k, v in tr.get("class_max_extent", {}).items()})
    pr = data.get("placerec", {})
    sg = pr.get("slidegraph", {})
    sm = pr.get("slidematch", {})
    kw = {}
    if "peer_prior_sigma" in be:
        kw["peer_prior_sigma"] = tuple(float(v) for v in be["peer_prior_sigma"])
    return AgentConfig(
        backend=backend, solver=solver, tracker=tracker,
        algo=pr.get("algo", "auto"),
        slidegraph=SlideGraphConfig(dist_tol=float(sg.get("dist_tol", 0.3)), epsilon=float(sg.get("epsilon", 0.5)),
                                    min_inliers=int(sg.get("min_inliers", 5)),
                                    max_hypotheses=int(sg.get("max_hypotheses", 5000)), mode=sg.get("mode", "auto")),
        slidematch=SlideMatchConfig(xy_resolution=float(sm.get("xy_resolution", 0.25)),
                                    yaw_resolution=math.radians(float(sm.get("yaw_resolution_deg", 2.0))),
                                    min_inliers=int(sm.get("min_inliers", 5)),
                                    budget_ms=float(sm["budget_ms"]) if "budget_ms" in sm else None,
                                    max_rings=int(sm["max_rings"]) if "max_rings" in sm else None),
        optimize_every=int(be.get("optimize_every", 10)),
        loop_closure_period=int(pr.get("loop_closure_period", 10)),
        fallback_after=int(pr.get("fallback_after", 2)),
        **kw,
    )


def scenario_from_dict(data: dict, base_dir: Path | None = None) -> Scenario:
    validate(data)
    default_sensor = data.get("sensor", {})
    robots = []
    for r in sorted(data["robots"], key=lambda r: r["id"]):
        sensor_d = {**default_sensor, **r.get("sensor", {})}
        try:
            sensor = sensor_from_dict(sensor_d)
        except ValueError as exc:
            raise ConfigError(str(exc), f"robots[{r['id']}].sensor") from exc
        robots.append(RobotSpec(int(r["id"]), tuple(tuple(float(v) for v in w) for w in r["waypoints"]),
                                float(r.get("key_pose_spacing", 1.0)), r.get("odom_noise", 0.0), sensor))
    try:
        agent = agent_config(data)
    except ValueError as exc:
        raise ConfigError(str(exc), "backend") from exc
    return Scenario(name=data.get("name", "scenario"), seed=int(data["seed"]), world=data["world"], robots=robots,
                    agent=agent, comm=data.get("comm", {}), metrics=data.get("metrics", {}), base_dir=base_dir,
                    raw=data)


def load_scenario(path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        text = resources.files("msslam.scenarios").joinpath(f"{path}.json").read_text()
        return scenario_from_dict(_parse(text, str(path)), None)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(_parse(text, str(path)), p.parent)


def _parse(text: str, name: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name}: invalid JSON ({exc})") from exc
