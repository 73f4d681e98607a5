"""Key-pose records and the binary peer message that carries them.

The wire format is little-endian and self-describing enough to be decoded
without the sender's configuration: class labels travel in a per-message
string table and every shape carries its kind tag.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from msslam.geometry import Pose, shape_from_params
from msslam.maps import LandmarkRecord, MapSnapshot
from msslam.worldsim.sensor import Detection

MAGIC = b"MSPM"
VERSION = 1
KINDS = ("cuboid", "cylinder", "ellipsoid")
N_PARAMS = {"cuboid": 9, "cylinder": 7, "ellipsoid": 5}


@dataclass(frozen=True)
class KeyPoseRecord:
    """One key pose of a robot: odometry from the previous key pose and its detections.

    The record at index 0 carries the identity; a robot's own frame is the
    pose where it started.
    """

    index: int
    odometry: Pose
    detections: tuple[Detection, ...] = ()


@dataclass(frozen=True)
class PeerMessage:
    sender: int
    receiver: int
    time: float
    records: tuple[KeyPoseRecord, ...]
    snapshot: MapSnapshot

    def __post_init__(self):
        idx = [r.index for r in self.records]
        if any(b != a + 1 for a, b in zip(idx, idx[1:])):
            raise ValueError("message records must be index-contiguous")

    @property
    def first_index(self) -> int | None:
        return self.records[0].index if self.records else None

    def to_bytes(self) -> bytes:
        return encode(self)

    @property
    def size(self) -> int:
        return len(encode(self))

    @classmethod
    def from_bytes(cls, data: bytes) -> "PeerMessage":
        return decode(data)


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def pack(self, fmt: str, *vals):
        self.parts.append(struct.pack("<" + fmt, *vals))

    def floats(self, arr):
        a = np.ascontiguousarray(arr, dtype="<f8").ravel()
        self.parts.append(a.tobytes())

    def bytes(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def unpack(self, fmt: str):
        s = struct.Struct("<" + fmt)
        vals = s.unpack_from(self.data, self.pos)
        self.pos += s.size
        return vals

    def floats(self, n: int) -> np.ndarray:
        out = np.frombuffer(self.data, dtype="<f8", count=n, offset=self.pos).astype(float)
        self.pos += 8 * n
        return out

    def raw(self, n: int) -> bytes:
        out = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return out


def _labels(msg: PeerMessage) -> list[str]:
    seen: dict[str, None] = {}
    for r in msg.records:
        for d in r.detections:
            seen.setdefault(d.class_label)
    for lm in msg.snapshot.landmarks:
        seen.setdefault(lm.label)
    return list(seen)


def _write_pose(w: _Writer, p: Pose):
    w.floats(p.rotation)
    w.floats(p.translation)


def _read_pose(r: _Reader) -> Pose:
    R = r.floats(9).reshape(3, 3)
    return Pose(R, r.floats(3))


def encode(msg: PeerMessage) -> bytes:
    labels = _labels(msg)
    lidx = {lab: i for i, lab in enumerate(labels)}
    w = _Writer()
    w.parts.append(MAGIC)
    w.pack("BHHd", VERSION, msg.sender, msg.receiver, float(msg.time))
    w.pack("H", len(labels))
    for lab in labels:
        raw = lab.encode("utf-8")
        w.pack("B", len(raw))
        w.parts.append(raw)
    w.pack("I", len(msg.records))
    for rec in msg.records:
        w.pack("IH", rec.index, len(rec.detections))
        _write_pose(w, rec.odometry)
        for d in rec.detections:
            w.pack("HBI", lidx[d.class_label], KINDS.index(d.shape.kind), d.observing_key_pose)
            w.floats(d.shape.params)
    snap = msg.snapshot
    w.pack("HI", snap.robot_id, len(snap.landmarks))
    for lm in snap.landmarks:
        w.pack("IHBI", lm.id, lidx[lm.label], KINDS.index(lm.kind), lm.observation_count)
        w.floats(lm.params)
    return w.bytes()


def decode(data: bytes) -> PeerMessage:
    r = _Reader(data)
    if r.raw(4) != MAGIC:
        raise ValueError("not a peer message")
    version, sender, receiver, time = r.unpack("BHHd")
    if version != VERSION:
        raise ValueError(f"unsupported message version {version}")
    (n_labels,) = r.unpack("H")
    labels = []
    for _ in range(n_labels):
        (ln,) = r.unpack("B")
        labels.append(r.raw(ln).decode("utf-8"))
    (n_rec,) = r.unpack("I")
    records = []
    for _ in range(n_rec):
        index, n_det = r.unpack("IH")
        odom = _read_pose(r)
        dets = []
        for _ in range(n_det):
            li, ki, kp = r.unpack("HBI")
            kind = KINDS[ki]
            dets.append(Detection(labels[li], shape_from_params(kind, r.floats(N_PARAMS[kind])), kp))
        records.append(KeyPoseRecord(index, odom, tuple(dets)))
    robot_id, n_lm = r.unpack("HI")
    lms = []
    for _ in range(n_lm):
        lid, li, ki, count = r.unpack("IHBI")
        kind = KINDS[ki]
        lms.append(LandmarkRecord(lid, labels[li], kind, tuple(float(v) for v in r.floats(N_PARAMS[kind])), count))
    return PeerMessage(sender, receiver, time, tuple(records), MapSnapshot(robot_id, tuple(lms)))
