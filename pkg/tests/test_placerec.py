import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msslam.errors import DegenerateInput, EmptyMap, HypothesisOverflow
from msslam.geometry import CylinderModel, Pose
from msslam.maps import LandmarkRecord, MapSnapshot
from msslam.placerec import (LoopClosureResult, SearchRegion, SlideGraphConfig, build_descriptors, consistency_refine,
                             delaunay, fit_transform_4dof, match_descriptors, score_transform, slidegraph, slidematch,
                             zero_center)
from msslam.placerec.align import alignment_rms
from msslam.placerec.clique import max_clique


def make_map(points, labels=None, robot_id=0, ids=None, radius=0.3) -> MapSnapshot:
    pts = np.asarray(points, dtype=float)
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    labels = labels or ["tree"] * len(pts)
    ids = list(range(len(pts))) if ids is None else ids
    recs = tuple(LandmarkRecord.from_shape(i, lab, CylinderModel(p, [0, 0, 1], radius), 3)
                 for i, lab, p in zip(ids, labels, pts))
    return MapSnapshot(robot_id, recs)


def random_world(rng, n, extent=20.0, min_sep=1.5):
    pts = []
    while len(pts) < n:
        p = rng.uniform(-extent, extent, 2)
        if all(np.linalg.norm(p - q) >= min_sep for q in pts):
            pts.append(p)
    labels = [["tree", "car", "pole"][k] for k in rng.integers(0, 3, n)]
    return make_map(np.array(pts), labels)


def yaw_err(a: Pose, b: Pose) -> float:
    d = a.yaw - b.yaw
    return abs((d + math.pi) % (2 * math.pi) - math.pi)


# -- fit_transform_4dof ----------------------------------------------------------

def test_fit_identity(rng):
    a = rng.uniform(-5, 5, (8, 3))
    fit = fit_transform_4dof(a, a)
    assert fit.pose.allclose(Pose.identity(), atol=1e-12) and not fit.degenerate


def test_fit_recovers_generator(rng):
    T = Pose.from_xyz_yaw(1, 2, 0.5, math.radians(30))
    a = rng.uniform(-5, 5, (10, 3))
    fit = fit_transform_4dof(list(zip(a, T.act(a))))
    assert fit.pose.allclose(T, atol=1e-9)
    R = fit.pose.rotation
    assert np.allclose(R[2], [0, 0, 1]) and np.allclose(R[:, 2], [0, 0, 1])


def test_fit_beats_grid_search(rng):
    T = Pose.from_xyz_yaw(0.7, -0.4, 0.0, 0.3)
    a = rng.uniform(-4, 4, (12, 3))
    b = T.act(a) + rng.normal(0, 0.05, a.shape)
    fit = fit_transform_4dof(a, b)
    best = math.inf
    zs = float(np.mean(b[:, 2] - a[:, 2]))
    for yaw in np.arange(0.0, 0.6, 0.05):
        for x in np.arange(0.4, 1.0, 0.05):
            for y in np.arange(-0.7, -0.1, 0.05):
                best = min(best, alignment_rms(Pose.from_xyz_yaw(x, y, zs, yaw), a, b))
    assert alignment_rms(fit.pose, a, b) <= best


def test_fit_degenerate_flag():
    a = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 2.0]])
    fit = fit_transform_4dof(a, a + [3, 0, 1])
    assert fit.degenerate
    assert fit.pose.yaw == 0.0 and np.allclose(fit.pose.translation, [3, 0, 1])


@given(st.integers(0, 10_000))
def test_fit_residual_never_above_truth(seed):
    r = np.random.default_rng(seed)
    T = Pose.from_xyz_yaw(*r.uniform(-10, 10, 3), r.uniform(-math.pi, math.pi))
    a = r.uniform(-10, 10, (int(r.integers(2, 20)), 3))
    b = T.act(a)
    fit = fit_transform_4dof(a, b)
    assert alignment_rms(fit.pose, a, b) <= alignment_rms(T, a, b) + 1e-9


# -- zero-centering and scoring --------------------------------------------------------

def test_zero_center_examples(rng):
    m = random_world(rng, 10)
    c = m.centroids()[:, :2].mean(axis=0)
    centered = m.translated_xy(-c[0], -c[1])
    _, _, oa, ob, region = zero_center(centered, centered)
    assert np.allclose(oa, 0.0, atol=1e-12) and np.allclose(ob, 0.0, atol=1e-12)
    shifted = centered.translated_xy(10, -4)
    ca, cb, oa, _, _ = zero_center(shifted, centered)
    assert np.allclose(oa, (10, -4))
    assert np.allclose(ca.centroids(), centered.centroids(), atol=1e-12)
    assert region.yaw_range == (-math.pi, math.pi)
    with pytest.raises(EmptyMap):
        zero_center(MapSnapshot(0), m)


def test_zero_center_shrinks_the_search(rng):
    a = random_world(rng, 15, extent=6.0)
    b = a.translated_xy(50, 50)
    small = SearchRegion.around(5.0)
    assert slidematch(a, b, small) is None
    res = slidematch(a, b, max_rings=25)  # zero-centred: +-5 m at 0.25 m resolution
    assert res is not None and res.score == 15
    assert res.transform.allclose(Pose.from_translation(50, 50, 0), atol=1e-9)


def test_score_transform_examples(rng):
    m = random_world(rng, 12)
    score, matches = score_transform(m, m, (0.0, 0.0, 0.0))
    assert score == 12 and matches == [(i, i) for i in range(12)]
    other = make_map(m.centroids(), ["rock"] * 12)
    assert score_transform(m, other, (0.0, 0.0, 0.0))[0] == 0
    rot = m.transformed(Pose.from_xyz_yaw(0, 0, 0, math.pi / 2))
    assert score_transform(m, rot, (0.0, 0.0, math.pi / 2))[0] == 12
    # oracle: apply the transform by hand and count centroids within 1 m
    moved = Pose.from_xyz_yaw(0, 0, 0, 0).act(m.centroids())
    expected = sum(np.min(np.linalg.norm(rot.centroids() - p, axis=1)) <= 1.0 for p in moved)
    assert score_transform(m, rot, (0.0, 0.0, 0.0))[0] <= expected < 5


@given(st.integers(0, 10_000))
@settings(max_examples=25)
def test_score_invariant_under_relabelling(seed):
    r = np.random.default_rng(seed)
    a = random_world(r, 10)
    b = a.transformed(Pose.from_xyz_yaw(0.3, -0.2, 0, 0.1))
    perm = [int(v) for v in r.permutation(100)[:10]]
    b2 = MapSnapshot(b.robot_id, tuple(LandmarkRecord(p, lm.label, lm.kind, lm.params, lm.observation_count)
                                       for p, lm in zip(perm, b.landmarks)))
    cand = (float(r.uniform(-1, 1)), float(r.uniform(-1, 1)), float(r.uniform(-0.5, 0.5)))
    assert score_transform(a, b, cand)[0] == score_transform(a, b2, cand)[0]
    r1, r2 = slidematch(a, b, max_rings=8), slidematch(a, b2, max_rings=8)
    assert (r1 is None) == (r2 is None)
    if r1 is not None:
        assert r1.score == r2.score


# -- SlideMatch ---------------------------------------------------------------------

def test_slidematch_identity(rng):
    m = random_world(rng, 10)
    res = slidematch(m, m, SearchRegion.around(2.0), min_inliers=5)
    assert res is not None and res.score == 10
    assert np.linalg.norm(res.transform.translation) <= 0.25 and yaw_err(res.transform, Pose.identity()) <= 0.035


def test_slidematch_recovers_known_motion(rng):
    m = random_world(rng, 10, extent=8.0)
    T = Pose.from_xyz_yaw(2, -1, 0, math.pi / 2)
    res = slidematch(m, m.transformed(T))
    assert res is not None and res.score == 10
    assert np.linalg.norm(res.transform.translation - T.translation) <= 0.125 + 0.05
    assert yaw_err(res.transform, T) <= math.radians(0.5)


def test_slidematch_disjoint_worlds(rng):
    a = make_map([[0, 0], [3, 1], [1, 4], [5, 5], [6, 1]])
    b = make_map([[0, 0], [10, 0], [0, 9], [12, 13], [7, 20]])
    assert slidematch(a, b, min_inliers=4) is None


def test_slidematch_rejects_bad_min_inliers(rng):
    m = random_world(rng, 5)
    with pytest.raises(ValueError):
        slidematch(m, m, min_inliers=2)


# -- Delaunay ---------------------------------------------------------------------

def empty_circumcircle(points, simplices, tol=1e-9) -> bool:
    for s in simplices:
        v = points[s]
        A = 2.0 * (v[1:] - v[0])
        b = np.sum(v[1:] ** 2 - v[0] ** 2, axis=1)
        c = np.linalg.solve(A, b)
        r = np.linalg.norm(v[0] - c)
        others = np.delete(points, s, axis=0)
        if len(others) and np.min(np.linalg.norm(others - c, axis=1)) < r - tol:
            return False
    return True


def test_delaunay_single_triangle():
    pts = np.array([[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]])
    assert delaunay(pts).tolist() == [[0, 1, 2]]


def test_delaunay_unit_square():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    tri = delaunay(pts)
    assert len(tri) == 2
    shared = set(tri[0]) & set(tri[1])
    assert shared in ({0, 2}, {1, 3})
    # both diagonal choices are valid: all four corners are cocircular
    for diag in ([[0, 1, 2], [0, 2, 3]], [[0, 1, 3], [1, 2, 3]]):
        assert empty_circumcircle(pts, np.array(diag))


def test_delaunay_random_points_empty_circles(rng):
    pts = rng.uniform(0, 10, (50, 2))
    assert empty_circumcircle(pts, delaunay(pts))
    pts3 = rng.uniform(0, 10, (40, 3))
    assert empty_circumcircle(pts3, delaunay(pts3))


def test_delaunay_degenerate():
    with pytest.raises(DegenerateInput):
        delaunay(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]))
    with pytest.raises(DegenerateInput):
        delaunay(np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 1.0]]))
    with pytest.raises(DegenerateInput):
        delaunay(np.array([[0.0, 0.0], [1.0, 0.0]]))


# -- descriptors ----------------------------------------------------------------------

def test_descriptor_equilateral():
    m = make_map([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
    (d,) = build_descriptors(m)
    assert np.allclose(d.distances, [1 / math.sqrt(3)] * 3)


def test_descriptor_right_triangle():
    m = make_map([[0, 0], [3, 0], [0, 4]], ["a", "b", "c"])
    (d,) = build_descriptors(m)
    c = np.array([1.0, 4.0 / 3.0])
    norms = {i: float(np.linalg.norm(np.array(p) - c)) for i, p in enumerate([[0, 0], [3, 0], [0, 4]])}
    assert np.allclose(d.distances, sorted(norms.values()))
    assert list(d.ids) == sorted(norms, key=norms.get)
    assert list(d.labels) == [["a", "b", "c"][i] for i in d.ids]


def test_descriptor_needs_three_landmarks():
    with pytest.raises(DegenerateInput):
        build_descriptors(make_map([[0, 0], [1, 0]]))


def test_match_descriptors_identity(rng):
    m = random_world(rng, 15)
    d = build_descriptors(m)
    cands = match_descriptors(d, d, 0.1)
    assert cands.descriptor_matches >= len(d)
    assert {(i, i) for i in range(15)} <= set(cands.pairs)


def test_match_descriptors_scale_mismatch(rng):
    m = random_world(rng, 15)
    big = make_map(2.0 * m.centroids(), m.labels())
    assert len(match_descriptors(build_descriptors(m), build_descriptors(big), 0.1)) == 0


def test_match_descriptors_rigid_motion_recall(rng):
    m = random_world(rng, 20)
    T = Pose.from_xyz_yaw(4, -3, 0.2, 1.1)
    cands = match_descriptors(build_descriptors(m), build_descriptors(m.transformed(T)), 0.1)
    true = {(i, i) for i in range(20)}
    assert len(true & set(cands.pairs)) >= 0.9 * len(true)


# -- consistency graph ---------------------------------------------------------------

def brute_max_clique_size(adj: list[int], n: int) -> int:
    best = 0
    for mask in range(1 << n):
        k = bin(mask).count("1")
        if k <= best:
            continue
        ok = True
        m = mask
        while m:
            v = (m & -m).bit_length() - 1
            m &= m - 1
            if mask & ~adj[v] & ~(1 << v):
                ok = False
                break
        if ok:
            best = k
    return best


def edge_rule(pairs, ca, cb, eps):
    n = len(pairs)
    adj = [0] * n
    for i, j in itertools.combinations(range(n), 2):
        (a, b), (a2, b2) = pairs[i], pairs[j]
        if a == a2 or b == b2:
            continue
        if abs(np.linalg.norm(ca[a] - ca[a2]) - np.linalg.norm(cb[b] - cb[b2])) <= eps:
            adj[i] |= 1 << j
            adj[j] |= 1 << i
    return adj


def test_consistency_refine_rejects_spurious_pair():
    a = make_map([[0, 0], [4, 0], [0, 5], [6, 6], [-3, 2], [9, -4]])
    T = Pose.from_xyz_yaw(1, 1, 0, 0.4)
    b = a.transformed(T)
    cands = [(i, i) for i in range(5)] + [(5, 0)]
    assert consistency_refine(cands, a, b, 0.1) == [(i, i) for i in range(5)]


def test_consistency_refine_all_consistent(rng):
    m = random_world(rng, 8)
    cands = [(i, i) for i in range(8)]
    assert consistency_refine(cands, m, m, 0.1) == cands


def test_consistency_refine_errors(rng):
    m = random_world(rng, 8)
    with pytest.raises(ValueError):
        consistency_refine([], m, m, 0.1)
    with pytest.raises(HypothesisOverflow):
        consistency_refine([(i, j) for i in range(8) for j in range(8)], m, m, 0.1, max_nodes=10)


def test_max_clique_matches_subset_enumeration():
    r = np.random.default_rng(2024)
    for _ in range(100):
        na, nb = int(r.integers(3, 8)), int(r.integers(3, 8))
        pa = r.uniform(0, 10, (na, 3))
        pb = r.uniform(0, 10, (nb, 3))
        all_pairs = [(i, j) for i in range(na) for j in range(nb)]
        k = int(r.integers(1, 16))
        pairs = [all_pairs[i] for i in sorted(r.choice(len(all_pairs), min(k, len(all_pairs)), replace=False))]
        adj = edge_rule(pairs, pa, pb, 2.0)
        clique = max_clique(adj)
        assert all((adj[u] >> v) & 1 for u, v in itertools.combinations(clique, 2))
        assert len(clique) == brute_max_clique_size(adj, len(pairs))
        ma = MapSnapshot(0, tuple(LandmarkRecord.from_shape(i, "t", CylinderModel(p, [0, 0, 1], 0.3))
                                  for i, p in enumerate(pa)))
        mb = MapSnapshot(1, tuple(LandmarkRecord.from_shape(i, "t", CylinderModel(p, [0, 0, 1], 0.3))
                                  for i, p in enumerate(pb)))
        assert len(consistency_refine(pairs, ma, mb, 2.0)) == len(clique)


# -- SlideGraph ---------------------------------------------------------------------

def test_slidegraph_noiseless_exact(rng):
    m = random_world(rng, 15)
    T = Pose.from_xyz_yaw(5, 3, 0, math.radians(45))
    res = slidegraph(m, m.transformed(T))
    assert res is not None and res.method == "slidegraph"
    assert np.linalg.norm(res.transform.translation - T.translation) < 1e-6
    assert yaw_err(res.transform, T) < 1e-6


def test_slidegraph_noisy(rng):
    m = random_world(rng, 15)
    T = Pose.from_xyz_yaw(5, 3, 0, math.radians(45))
    b = m.transformed(T)
    noisy = make_map(b.centroids() + rng.normal(0, 0.1, (15, 3)), b.labels())
    res = slidegraph(m, noisy, SlideGraphConfig(dist_tol=0.4, epsilon=0.5))
    assert res is not None
    assert np.linalg.norm(res.transform.translation - T.translation) <= 0.5
    assert math.degrees(yaw_err(res.transform, T)) <= 3.0


def test_slidegraph_different_worlds(rng):
    a = random_world(np.random.default_rng(1), 15)
    b = random_world(np.random.default_rng(2), 15)
    assert slidegraph(a, b, SlideGraphConfig(dist_tol=0.1, epsilon=0.2, min_inliers=6)) is None


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_slidegraph_recovers_any_rigid_motion(seed):
    r = np.random.default_rng(seed)
    m = random_world(r, int(r.integers(10, 30)))
    T = Pose.from_xyz_yaw(*r.uniform(-50, 50, 2), float(r.uniform(-2, 2)), float(r.uniform(-math.pi, math.pi)))
    res = slidegraph(m, m.transformed(T))
    assert res is not None
    assert np.linalg.norm(res.transform.translation - T.translation) < 1e-6
    assert yaw_err(res.transform, T) < 1e-6


# -- result type ---------------------------------------------------------------------

def test_loop_closure_result_invariants():
    T = Pose.from_xyz_yaw(1, 2, 0, 0.5)
    res = LoopClosureResult(T, ((0, 1), (2, 3)), 2)
    back = LoopClosureResult.from_dict(res.to_dict())
    assert back.transform.allclose(T) and back.matches == res.matches
    assert res.to_dict()["transform"] == pytest.approx([1, 2, 0, 0.5])
    with pytest.raises(ValueError):
        LoopClosureResult(T, ((0, 1), (2, 3)), 3)
    with pytest.raises(ValueError):
        LoopClosureResult(T, ((0, 1), (0, 3)), 2)
