"""Pairwise-consistency graph over association hypotheses and its maximum clique.

Vertex sets are Python integers used as bitsets, which keeps the
branch-and-bound inner loop to a handful of big-integer operations.
"""

from __future__ import annotations

import numpy as np

from msslam.errors import HypothesisOverflow

DEFAULT_MAX_NODES = 5000
ROW_CHUNK = 512


def _bits(row: np.ndarray) -> int:
    return int.from_bytes(np.packbits(row, bitorder="little").tobytes(), "little")


def consistency_adjacency(pairs, cent_a: dict, cent_b: dict, epsilon: float) -> list[int]:
    """Bitset adjacency: pairs (a, b) and (a', b') are linked when distinct
    on both sides and their intra-map distances agree within ``epsilon``."""
    n = len(pairs)
    ia = np.array([p[0] for p in pairs])
    ib = np.array([p[1] for p in pairs])
    pa = np.array([cent_a[a] for a in ia], dtype=float).reshape(n, 3)
    pb = np.array([cent_b[b] for b in ib], dtype=float).reshape(n, 3)
    adj = []
    for s in range(0, n, ROW_CHUNK):
        e = min(n, s + ROW_CHUNK)
        da = np.linalg.norm(pa[s:e, None, :] - pa[None, :, :], axis=2)
        db = np.linalg.norm(pb[s:e, None, :] - pb[None, :, :], axis=2)
        ok = (np.abs(da - db) <= epsilon) & (ia[s:e, None] != ia[None, :]) & (ib[s:e, None] != ib[None, :])
        adj.extend(_bits(row) for row in ok)
    return adj


def core_numbers(adj: list[int]) -> list[int]:
    """k-core number of every vertex (Batagelj-Zaversnik peeling)."""
    n = len(adj)
    deg = [a.bit_count() for a in adj]
    maxd = max(deg, default=0)
    buckets: list[set[int]] = [set() for _ in range(maxd + 1)]
    for v, d in enumerate(deg):
        buckets[d].add(v)
    core = [0] * n
    removed = 0
    alive = (1 << n) - 1
    k = 0
    while removed < n:
        while k <= maxd and not buckets[k]:
            k += 1
        d = k
        v = buckets[d].pop()
        core[v] = d
        removed += 1
        alive &= ~(1 << v)
        nb = adj[v] & alive
        while nb:
            low = nb & -nb
            u = low.bit_length() - 1
            nb ^= low
            du = deg[u]
            if du > d:
                buckets[du].discard(u)
                deg[u] = du - 1
                buckets[du - 1].add(u)
        k = max(0, d - 1)
    return core


def max_clique(adj: list[int]) -> list[int]:
    """Exact maximum clique by branch and bound with a greedy-colouring bound.

    Vertices are relabelled by degeneracy order (highest core first) so the
    colouring sees dense regions early; vertices whose core number cannot
    beat the incumbent are discarded up front.
    """
    n = len(adj)
    if n == 0:
        return []
    core = core_numbers(adj)
    order = sorted(range(n), key=lambda v: (-core[v], -adj[v].bit_count(), v))
    pos = {v: i for i, v in enumerate(order)}
    radj = [0] * n
    for v in range(n):
        bits = adj[v]
        out = 0
        while bits:
            low = bits & -bits
            out |= 1 << pos[low.bit_length() - 1]
            bits ^= low
        radj[pos[v]] = out

    # greedy incumbent
    best: list[int] = []
    for start in range(n):
        if core[order[start]] + 1 <= len(best):
            break
        clique = [start]
        cand = radj[start]
        while cand:
            low = cand & -cand
            v = low.bit_length() - 1
            clique.append(v)
            cand &= radj[v]
        if len(clique) > len(best):
            best = clique

    allowed = 0
    for i in range(n):
        if core[order[i]] + 1 > len(best):
            allowed |= 1 << i
    radj = [a & allowed for a in radj]

    state = {"best": best}

    def colour(P: int):
        verts, cols = [], []
        c = 0
        U = P
        while U:
            c += 1
            Q = U
            while Q:
                low = Q & -Q
                v = low.bit_length() - 1
                Q &= ~radj[v] & ~low
                U &= ~low
                verts.append(v)
                cols.append(c)
        return verts, cols

    def expand(R: list[int], P: int):
        verts, cols = colour(P)
        for k in range(len(verts) - 1, -1, -1):
            if len(R) + cols[k] <= len(state["best"]):
                return
            v = verts[k]
            R.append(v)
            NP = P & radj[v]
            if NP:
                expand(R, NP)
            elif len(R) > len(state["best"]):
                state["best"] = list(R)
            R.pop()
            P &= ~(1 << v)

    expand([], allowed)
    return sorted(order[i] for i in state["best"])


def is_clique(adj: list[int], verts) -> bool:
    vs = list(verts)
    return all((adj[u] >> v) & 1 for i, u in enumerate(vs) for v in vs[i + 1:])


def consistency_refine(candidates, map_a, map_b, epsilon: float,
                       max_nodes: int = DEFAULT_MAX_NODES) -> list[tuple[int, int]]:
    """Largest mutually consistent subset of candidate ``(id_a, id_b)`` pairs."""
    pairs = list(candidates.pairs if hasattr(candidates, "pairs") else candidates)
    if not pairs:
        raise ValueError("consistency_refine needs at least one candidate")
    if len(pairs) > max_nodes:
        raise HypothesisOverflow(f"{len(pairs)} hypotheses exceed the cap of {max_nodes}")
    cent_a = {lm.id: lm.centroid for lm in map_a.landmarks}
    cent_b = {lm.id: lm.centroid for lm in map_b.landmarks}
    adj = consistency_adjacency(pairs, cent_a, cent_b, epsilon)
    return sorted(pairs[i] for i in max_clique(adj))
