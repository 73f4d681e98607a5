"""Per-robot observation database with per-peer delta bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field

from msslam.errors import GapInRecords
from msslam.geometry import Pose
from msslam.maps import MapSnapshot
from msslam.swarm.messages import KeyPoseRecord, PeerMessage


@dataclass
class RobotDatabase:
    """Own key-pose records plus what has been sent to and heard from each peer."""

    robot_id: int
    records: list[KeyPoseRecord] = field(default_factory=list)
    snapshot: MapSnapshot | None = None
    bookmarks: dict[int, int] = field(default_factory=dict)
    last_meeting: dict[int, float] = field(default_factory=dict)

    @property
    def latest_index(self) -> int:
        return len(self.records) - 1

    def append_record(self, odometry: Pose, detections=()) -> KeyPoseRecord:
        rec = KeyPoseRecord(len(self.records), odometry, tuple(detections))
        self.records.append(rec)
        return rec

    def bookmark(self, peer_id: int) -> int:
        return self.bookmarks.get(peer_id, -1)

    def current_snapshot(self) -> MapSnapshot:
        return self.snapshot if self.snapshot is not None else MapSnapshot(self.robot_id, ())


def snapshot_message(db: RobotDatabase, peer_id: int, t: float = 0.0, ack: bool = True) -> PeerMessage:
    """Records the peer has not seen yet plus the current map snapshot.

    Delivery is acknowledged immediately in-process, so the bookmark moves
    to the newest record unless ``ack`` is false.
    """
    start = db.bookmark(peer_id) + 1
    msg = PeerMessage(db.robot_id, peer_id, float(t), tuple(db.records[start:]), db.current_snapshot())
    if ack and db.records:
        db.bookmarks[peer_id] = db.latest_index
    return msg


@dataclass
class PeerState:
    """What a robot knows about one peer."""

    peer_id: int
    buffer: list[KeyPoseRecord] = field(default_factory=list)
    received_upto: int = -1
    merged_upto: int = -1
    snapshot: MapSnapshot | None = None
    transform: Pose | None = None
    transform_time: float | None = None
    failures: int = 0
    attempts: int = 0

    def accept(self, msg: PeerMessage):
        """Buffer the message's records after checking they continue the stream."""
        if msg.records:
            first = msg.records[0].index
            if first > self.received_upto + 1:
                raise GapInRecords(f"peer {self.peer_id}: expected record {self.received_upto + 1}, got {first}")
            fresh = [r for r in msg.records if r.index > self.received_upto]
            self.buffer.extend(fresh)
            if fresh:
                self.received_upto = fresh[-1].index
        self.snapshot = msg.snapshot
