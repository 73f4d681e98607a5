"""Named, counter-based random streams.

Every stream is a Philox generator keyed by the scenario seed and a tuple of
names, so streams are disjoint, independent of creation order and replay
identically across platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np

RNG_VERSION = 1


def stream_key(seed: int, *names: object) -> int:
    text = "|".join([f"v{RNG_VERSION}", str(int(seed))] + [str(n) for n in names])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def make_rng(seed: int, *names: object) -> np.random.Generator:
    """Return a Philox generator for stream ``names`` under ``seed``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *names)))
