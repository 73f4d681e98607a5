"""Scripted communication schedule and the message exchange step."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CommRecord:
    t: float
    sender: int
    receiver: int
    bytes: int
    records: int


@dataclass
class CommSchedule:
    """Symmetric 0/1 adjacency matrices keyed by time step."""

    n_robots: int
    events: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for t, A in self.events.items():
            self._check(A)

    def _check(self, A: np.ndarray):
        if A.shape != (self.n_robots, self.n_robots):
            raise ValueError(f"adjacency must be {self.n_robots}x{self.n_robots}")
        if not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(A) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        if not np.all((A == 0) | (A == 1)):
            raise ValueError("adjacency entries must be 0 or 1")

    def add(self, t: int, pairs):
        A = self.events.get(int(t), np.zeros((self.n_robots, self.n_robots), dtype=int)).copy()
        for i, j in pairs:
            if i == j or not (0 <= i < self.n_robots and 0 <= j < self.n_robots):
                raise ValueError(f"invalid robot pair ({i}, {j})")
            A[i, j] = A[j, i] = 1
        self._check(A)
        self.events[int(t)] = A

    def adjacency(self, t: int) -> np.ndarray:
        return self.events.get(int(t), np.zeros((self.n_robots, self.n_robots), dtype=int))

    def pairs(self, t: int) -> list[tuple[int, int]]:
        A = self.adjacency(t)
        return [(i, j) for i in range(self.n_robots) for j in range(i + 1, self.n_robots) if A[i, j]]

    def times(self) -> list[int]:
        return sorted(self.events)

    @classmethod
    def from_json(cls, n_robots: int, entries) -> "CommSchedule":
        """Entries of the form ``{"t": 5, "pairs": [[0, 1], ...]}``."""
        sched = cls(n_robots)
        for e in entries:
            sched.add(int(e["t"]), [tuple(p) for p in e["pairs"]])
        return sched

    @classmethod
    def periodic(cls, n_robots: int, period: int, horizon: int, pairs=None) -> "CommSchedule":
        if pairs is None:
            pairs = [(i, j) for i in range(n_robots) for j in range(i + 1, n_robots)]
        sched = cls(n_robots)
        for t in range(0, horizon, period):
            sched.add(t, pairs)
        return sched


def step_comm(schedule: CommSchedule, t: int, agents) -> list[CommRecord]:
    """Exchange messages along every link active at ``t``.

    ``agents`` is indexed by robot id and provides ``db`` and
    ``receive_message``. Both directions are composed before either is
    delivered so neither side sees the other's reply within the step.
    """
    log: list[CommRecord] = []
    outbox = []
    for i, j in schedule.pairs(t):
        for s, r in ((i, j), (j, i)):
            msg = agents[s].outgoing(r, t)
            outbox.append(msg)
            log.append(CommRecord(t, s, r, msg.size, len(msg.records)))
    for msg in outbox:
        agents[msg.receiver].receive_message(msg)
    for i, j in schedule.pairs(t):
        agents[i].db.last_meeting[j] = t
        agents[j].db.last_meeting[i] = t
    return log
