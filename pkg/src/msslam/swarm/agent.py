"""A robot of the swarm: front-end, factor graph, database and peer handling."""

from __future__ import annotations

import logging
import math
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field

from msslam.backend.graph import BackendConfig, FactorGraph
from msslam.backend.solver import OptimizeResult, SolverConfig
from msslam.errors import DegenerateInput, HypothesisOverflow
from msslam.geometry import Pose
from msslam.maps import MapSnapshot
from msslam.placerec.result import LoopClosureResult
from msslam.placerec.slidegraph import SlideGraphConfig, slidegraph
from msslam.placerec.slidematch import slidematch
from msslam.swarm.database import PeerState, RobotDatabase, snapshot_message
from msslam.swarm.messages import KeyPoseRecord, PeerMessage
from msslam.worldsim.sensor import Detection
from msslam.worldsim.tracking import Tracker

log = logging.getLogger(__name__)

ALGOS = ("slidegraph", "slidematch", "auto")


@dataclass(frozen=True)
class SlideMatchConfig:
    xy_resolution: float = 0.25
    yaw_resolution: float = math.radians(2.0)
    min_inliers: int = 5
    budget_ms: float | None = None
    max_rings: int | None = None


@dataclass(frozen=True)
class TrackerConfig:
    gate: float = 1.0
    confirm_threshold: int = 3
    max_age: int = 5
    class_max_extent: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AgentConfig:
    backend: BackendConfig = field(default_factory=BackendConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    algo: str = "auto"
    slidegraph: SlideGraphConfig = field(default_factory=SlideGraphConfig)
    slidematch: SlideMatchConfig = field(default_factory=SlideMatchConfig)
    optimize_every: int = 10
    loop_closure_period: int = 10
    peer_prior_sigma: tuple[float, ...] = (0.5, 0.5, 0.5, 0.05, 0.05, 0.05)
    use_worker: bool = True
    # consecutive slidegraph failures before slidematch is tried as well
    fallback_after: int = 2

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if len(self.peer_prior_sigma) != 6 or min(self.peer_prior_sigma) <= 0:
            raise ValueError("peer_prior_sigma needs 6 positive entries")


@dataclass
class ClosureAttempt:
    t: float
    peer: int
    method: str
    success: bool
    stats: dict


def recognize(own: MapSnapshot, peer: MapSnapshot, cfg: AgentConfig, failures: int = 0,
              attempts: list | None = None) -> LoopClosureResult | None:
    """Run the configured place recognition between two snapshots.

    With ``algo="auto"`` SlideGraph is tried first; once it has failed
    ``fallback_after`` times in a row (counting this call), SlideMatch is run
    as well.
    """
    notes = attempts if attempts is not None else []
    sm = cfg.slidematch
    min_lm = max(3, cfg.slidegraph.min_inliers, sm.min_inliers)
    if len(own) < min_lm or len(peer) < min_lm:
        return None
    if cfg.algo in ("slidegraph", "auto"):
        res, info = None, {}
        try:
            res = slidegraph(own, peer, cfg.slidegraph)
        except (DegenerateInput, HypothesisOverflow) as exc:
            info = {"error": type(exc).__name__}
        notes.append(("slidegraph", res, res.stats if res else info))
        if res is not None or cfg.algo == "slidegraph":
            return res
        if failures + 1 < cfg.fallback_after:
            return None
    res = slidematch(own, peer, None, sm.budget_ms, sm.min_inliers, cfg.backend.association, sm.max_rings,
                     sm.xy_resolution, sm.yaw_resolution)
    notes.append(("slidematch", res, res.stats if res else {}))
    return res


class RobotAgent:
    """One robot: tracks detections, grows its graph and exchanges records."""

    def __init__(self, robot_id: int, config: AgentConfig | None = None):
        self.robot_id = robot_id
        self.config = config or AgentConfig()
        self.graph = FactorGraph(self.config.backend, robot_id)
        self.db = RobotDatabase(robot_id)
        tc = self.config.tracker
        self.tracker = Tracker(gate=tc.gate, confirm_threshold=tc.confirm_threshold, max_age=tc.max_age,
                               class_max_extent=dict(tc.class_max_extent))
        self.peers: dict[int, PeerState] = {}
        self.closures: list[ClosureAttempt] = []
        self.optimizations: list[OptimizeResult] = []
        self._last_odom: Pose | None = None
        self._snap_version = -1
        self._executor: ThreadPoolExecutor | None = None
        self._pending: list[tuple[int, float, Future]] = []

    # -- own data ------------------------------------------------------------

    def step(self, odom_pose: Pose, detections: list[Detection], frame: int | None = None) -> int:
        """Ingest one key pose of odometry and raw detections; returns the key-pose id."""
        index = len(self.db.records)
        emitted = self.tracker.update(detections, index if frame is None else frame, odom_pose)
        dets = tuple(Detection(d.class_label, d.shape, index) for _, d in emitted)
        rel = Pose.identity() if self._last_odom is None else self._last_odom.relative(odom_pose)
        self._last_odom = odom_pose
        rec = self.db.append_record(rel, dets)
        kid = self._apply(self.robot_id, rec, anchor=Pose.identity(), fixed=True)
        if self.config.optimize_every and (index + 1) % self.config.optimize_every == 0:
            self.optimize()
        return kid

    def _apply(self, robot_id: int, rec: KeyPoseRecord, anchor: Pose | None = None, fixed: bool = False,
               prior_weights=None) -> int:
        g = self.graph
        if not g.robot_key_poses(robot_id):
            kid = g.insert_key_pose(robot_id, rec.index, rec.odometry, estimate=anchor, prior=anchor,
                                    fixed=fixed, prior_weights=prior_weights)
        else:
            kid = g.insert_key_pose(robot_id, rec.index, rec.odometry)
        for d in rec.detections:
            g.add_detection(kid, d)
        return kid

    def optimize(self) -> OptimizeResult:
        res = self.graph.optimize(self.config.solver)
        self.optimizations.append(res)
        return res

    def snapshot(self) -> MapSnapshot:
        if self._snap_version != self.graph.version:
            self.db.snapshot = self.graph.snapshot(self.robot_id)
            self._snap_version = self.graph.version
        return self.db.current_snapshot()

    # -- messaging -----------------------------------------------------------

    def outgoing(self, peer_id: int, t: float) -> PeerMessage:
        self.snapshot()
        return snapshot_message(self.db, peer_id, t)

    def peer(self, peer_id: int) -> PeerState:
        return self.peers.setdefault(peer_id, PeerState(peer_id))

    def receive_message(self, msg: PeerMessage):
        p = self.peer(msg.sender)
        p.accept(msg)
        self.db.last_meeting[msg.sender] = msg.time
        if p.transform is not None and p.buffer:
            self.merge_peer(msg.sender)

    def merge_peer(self, peer_id: int):
        """Replay buffered peer records into the graph in the host frame."""
        p = self.peers[peer_id]
        if p.transform is None:
            raise ValueError(f"no transform established for peer {peer_id}")
        w = [1.0 / s for s in self.config.peer_prior_sigma]
        every = self.config.optimize_every
        for rec in p.buffer:
            self._apply(peer_id, rec, anchor=p.transform @ rec.odometry if rec.index == 0 else None,
                        prior_weights=w)
            p.merged_upto = rec.index
            # same optimization cadence as native processing, so drift is
            # corrected before later detections are associated
            if every and (rec.index + 1) % every == 0:
                self.optimize()
        p.buffer.clear()

    # -- loop closure ----------------------------------------------------------

    def _closure_job(self, peer_id: int, own: MapSnapshot, other: MapSnapshot, failures: int):
        notes: list = []
        res = recognize(own, other, self.config, failures, notes)
        return res, notes

    def schedule_loop_closures(self, t: float):
        """Start place recognition against every peer still lacking a transform."""
        own = None
        for pid in sorted(self.peers):
            p = self.peers[pid]
            if p.transform is not None or p.snapshot is None or any(q == pid for q, _, _ in self._pending):
                continue
            own = own or self.snapshot()
            if self.config.use_worker:
                if self._executor is None:
                    self._executor = ThreadPoolExecutor(max_workers=1, thread_name_prefix=f"placerec-{self.robot_id}")
                fut = self._executor.submit(self._closure_job, pid, own, p.snapshot, p.failures)
            else:
                fut = Future()
                fut.set_result(self._closure_job(pid, own, p.snapshot, p.failures))
            self._pending.append((pid, t, fut))

    def join_loop_closures(self) -> list[int]:
        """Apply finished place-recognition results; returns peers newly closed."""
        closed = []
        for pid, t, fut in self._pending:
            res, notes = fut.result()
            for method, r, stats in notes:
                self.closures.append(ClosureAttempt(t, pid, method, r is not None, dict(stats)))
            if self._accept(pid, res, t):
                closed.append(pid)
        self._pending.clear()
        if closed:
            self.optimize()
        return closed

    def attempt_loop_closure(self, peer_id: int, t: float = 0.0) -> Pose | None:
        """Synchronous loop-closure attempt; an established transform is returned as is."""
        p = self.peer(peer_id)
        if p.transform is not None:
            return p.transform
        if p.snapshot is None:
            return None
        res, notes = self._closure_job(peer_id, self.snapshot(), p.snapshot, p.failures)
        for method, r, stats in notes:
            self.closures.append(ClosureAttempt(t, peer_id, method, r is not None, dict(stats)))
        if self._accept(peer_id, res, t):
            self.optimize()
        return p.transform

    def _accept(self, peer_id: int, res: LoopClosureResult | None, t: float) -> bool:
        p = self.peer(peer_id)
        p.attempts += 1
        if p.transform is not None:
            return False
        if res is None:
            p.failures += 1
            return False
        p.failures = 0
        # the result maps own coordinates into the peer's; store peer -> host
        p.transform = res.transform.inverse()
        p.transform_time = t
        log.info("robot %d: closed loop with robot %d (score %d)", self.robot_id, peer_id, res.score)
        self.merge_peer(peer_id)
        return True

    def reset_transform(self, peer_id: int):
        self.peer(peer_id).transform = None

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
