import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from msslam.errors import DegenerateTrajectory, PlacementFailure
from msslam.geometry import CuboidModel, CylinderModel, EllipsoidModel, Pose, rot_z
from msslam.rng import make_rng
from msslam.worldsim.sensor import Detection, SensorModel, simulate_detections
from msslam.worldsim.tracking import Track, Tracker, assignment_cost, hungarian_assign, reject_elongated, track_update
from msslam.worldsim.trajectory import generate_trajectory, interpolate_key_poses
from msslam.worldsim.world import ClassSpec, LandmarkTruth, World, WorldSpec, generate_world, load_world


def brute_force_assignment(cost):
    """Best (max matched, then min cost) over all partial permutations."""
    c = np.asarray(cost, dtype=float)
    n, m = c.shape
    best = (0, 0.0)
    if n <= m:
        for perm in itertools.permutations(range(m), n):
            pairs = [(i, perm[i]) for i in range(n) if np.isfinite(c[i, perm[i]])]
            key = (len(pairs), sum(c[i, j] for i, j in pairs))
            if key[0] > best[0] or (key[0] == best[0] and key[1] < best[1]):
                best = key
    else:
        for perm in itertools.permutations(range(n), m):
            pairs = [(perm[j], j) for j in range(m) if np.isfinite(c[perm[j], j])]
            key = (len(pairs), sum(c[i, j] for i, j in pairs))
            if key[0] > best[0] or (key[0] == best[0] and key[1] < best[1]):
                best = key
    return best


def single_world(shape, label="car"):
    return World((LandmarkTruth(0, label, shape),), (-50.0, 50.0, -50.0, 50.0), 0)


# -- world generation ------------------------------------------------------------

def test_empty_world():
    w = generate_world(WorldSpec((0, 10, 0, 10), ()), seed=3)
    assert len(w) == 0
    assert w.centroids().shape == (0, 3)


def test_world_deterministic():
    spec = WorldSpec((0, 50, 0, 50), (ClassSpec("tree", "cylinder", 10),), min_spacing=2.0)
    a = generate_world(spec, 7)
    b = generate_world(spec, 7)
    assert a.to_records() == b.to_records()
    assert generate_world(spec, 8).to_records() != a.to_records()


def test_world_spacing_and_bounds():
    spec = WorldSpec((0, 100, 0, 100), (ClassSpec("tree", "cylinder", 30), ClassSpec("car", "cuboid", 20)),
                     min_spacing=3.0)
    w = generate_world(spec, 11)
    c = w.centroids()
    d = np.linalg.norm(c[:, None] - c[None], axis=2)
    assert d[np.triu_indices(len(c), 1)].min() >= 3.0
    assert np.all((c[:, 0] >= 0) & (c[:, 0] <= 100) & (c[:, 1] >= 0) & (c[:, 1] <= 100))
    assert len({lm.id for lm in w.landmarks}) == 50


def test_world_placement_failure():
    spec = WorldSpec((0, 2, 0, 2), (ClassSpec("tree", "cylinder", 10),), min_spacing=5.0)
    with pytest.raises(PlacementFailure):
        generate_world(spec, 0)


def test_world_save_load_round_trip(tmp_path):
    spec = WorldSpec((0, 30, 0, 30), (ClassSpec("car", "cuboid", 4), ClassSpec("person", "ellipsoid", 3)))
    w = generate_world(spec, 5)
    w.save(tmp_path / "w.json")
    back = load_world(tmp_path / "w.json", spec, 5)
    assert back.to_records() == w.to_records()
    recs = json.loads((tmp_path / "w.json").read_text())
    assert set(recs[0]) >= {"id", "class", "shape_kind", "params"}


def test_moving_landmarks_have_velocity():
    spec = WorldSpec((0, 30, 0, 30), (ClassSpec("person", "ellipsoid", 3, moving=2, speed=1.5),))
    w = generate_world(spec, 2)
    assert sum(lm.moving for lm in w.landmarks) == 2
    mover = next(lm for lm in w.landmarks if lm.moving)
    assert np.linalg.norm(mover.at_time(2.0).centroid - mover.shape.centroid) == pytest.approx(3.0)


# -- detections ------------------------------------------------------------------

def test_noiseless_detection_in_body_frame():
    w = single_world(CylinderModel([5.0, 0.0, 0.0], [0, 0, 1], 0.3), "tree")
    dets = simulate_detections(Pose.identity(), w, SensorModel(), make_rng(0, "d"))
    assert len(dets) == 1
    np.testing.assert_array_equal(dets[0].shape.centroid, [5.0, 0.0, 0.0])


def test_noiseless_detection_rotated_pose():
    w = single_world(CuboidModel([0, 0, 0.4], [3.0, 4.0, 1.0], [4, 2, 1.5]))
    pose = Pose(rot_z(0.3), [1.0, 1.0, 0.0])
    det = simulate_detections(pose, w, SensorModel(), make_rng(0, "d"))[0]
    np.testing.assert_allclose(det.shape.centroid, pose.inverse().act([3.0, 4.0, 1.0]), atol=1e-12)
    assert det.shape.pose.yaw == pytest.approx(0.1)


def test_fov_cull_behind():
    w = single_world(EllipsoidModel([-5.0, 0.0, 0.5], [0.3, 0.8]), "person")
    sensor = SensorModel(hfov=math.radians(90))
    assert simulate_detections(Pose.identity(), w, sensor, make_rng(0, "d")) == []


def test_range_cull():
    w = single_world(CylinderModel([20.0, 0.0, 0.0], [0, 0, 1], 0.3), "tree")
    assert simulate_detections(Pose.identity(), w, SensorModel(max_range=15.0), make_rng(0, "d")) == []


def test_false_negative_binomial_band():
    lms = tuple(LandmarkTruth(i, "tree", CylinderModel([5.0 * math.cos(a), 5.0 * math.sin(a), 0.0], [0, 0, 1], 0.2))
                for i, a in enumerate(np.linspace(-math.pi, math.pi, 100, endpoint=False)))
    w = World(lms, (-10, 10, -10, 10), 0)
    sensor = SensorModel(false_negative_rate=0.2)
    rng = make_rng(1, "fn")
    total = sum(len(simulate_detections(Pose.identity(), w, sensor, rng)) for _ in range(100))
    n, p = 10000, 0.8
    sigma = math.sqrt(n * p * (1 - p))
    assert abs(total - n * p) <= 3 * sigma


def test_false_positives_in_frustum():
    w = single_world(CylinderModel([5.0, 0.0, 0.0], [0, 0, 1], 0.3), "tree")
    sensor = SensorModel(false_positive_rate=1.0, max_range=10.0, hfov=math.radians(90))
    for k in range(50):
        dets = simulate_detections(Pose.identity(), w, sensor, make_rng(k, "fp"))
        fps = [d for d in dets if d.source_id == -1]
        assert len(fps) == 1
        assert sensor.in_frustum(fps[0].shape.centroid)[0]


def test_detection_stream_deterministic():
    spec = WorldSpec((0, 30, 0, 30), (ClassSpec("car", "cuboid", 5), ClassSpec("tree", "cylinder", 5)))
    w = generate_world(spec, 3)
    sensor = SensorModel(position_noise_sigma=0.1, false_negative_rate=0.2, false_positive_rate=0.1)

    def stream():
        rng = make_rng(3, "detections", 0)
        return [[(d.class_label, d.shape.params.tobytes()) for d in
                 simulate_detections(Pose.from_translation(15, 15, 0), w, sensor, rng)] for _ in range(5)]

    assert stream() == stream()


def test_points_mode_refit_close_to_truth():
    w = single_world(CylinderModel([5.0, 1.0, 0.0], [0, 0, 1], 0.3), "tree")
    sensor = SensorModel(mode="points", points_per_object=400)
    det = simulate_detections(Pose.identity(), w, sensor, make_rng(0, "pts"))[0]
    assert np.linalg.norm(det.shape.centroid[:2] - [5.0, 1.0]) < 0.05
    assert det.shape.radius == pytest.approx(0.3, abs=0.05)


def test_sensor_validation():
    with pytest.raises(ValueError):
        SensorModel(false_negative_rate=1.5)
    with pytest.raises(ValueError):
        SensorModel(position_noise_sigma=-1.0)


# -- hungarian -------------------------------------------------------------------

def test_hungarian_examples():
    assert hungarian_assign([[3.0]]) == [(0, 0)]
    c = [[4, 1, 3], [2, 0, 5], [3, 2, 2]]
    pairs = hungarian_assign(c)
    assert pairs == [(0, 1), (1, 0), (2, 2)]
    assert assignment_cost(c, pairs) == 5
    inf = math.inf
    pairs = hungarian_assign([[inf, inf, inf], [1.0, 2.0, 3.0]])
    assert pairs == [(1, 0)]
    assert hungarian_assign([[inf, inf]]) == []


def test_hungarian_matches_brute_force():
    rng = np.random.default_rng(99)
    agree = 0
    trials = 200
    for _ in range(trials):
        n, m = rng.integers(1, 7, 2)
        c = rng.uniform(0, 10, (n, m))
        c[rng.random((n, m)) < 0.2] = math.inf
        pairs = hungarian_assign(c)
        assert len({i for i, _ in pairs}) == len(pairs) == len({j for _, j in pairs})
        got = (len(pairs), assignment_cost(c, pairs))
        want = brute_force_assignment(c)
        agree += got[0] == want[0] and math.isclose(got[1], want[1], abs_tol=1e-9)
    assert agree == trials


def test_hungarian_rejects_negative():
    with pytest.raises(ValueError):
        hungarian_assign([[-1.0]])


# -- tracking --------------------------------------------------------------------

def det_at(x, y, label="tree", frame=0):
    return Detection(label, CylinderModel([x, y, 0.0], [0, 0, 1], 0.3), frame)


def test_track_single_detection_no_confirmed():
    tracks, confirmed = track_update([], [det_at(1, 1)], gate=1.0)
    assert len(tracks) == 1 and confirmed == []


def test_track_three_frames_confirms():
    tracks = []
    for f in range(3):
        tracks, confirmed = track_update(tracks, [det_at(1 + 0.01 * f, 1)], gate=1.0, frame=f)
    assert len(tracks) == 1 and len(confirmed) == 1


def test_tracks_far_apart_never_merge():
    tracks = []
    for f in range(5):
        tracks, _ = track_update(tracks, [det_at(0, 0), det_at(10, 0)], gate=1.0, frame=f)
    assert len(tracks) == 2
    assert all(t.hits == 5 for t in tracks)


def test_track_label_must_match():
    tr = Tracker(gate=1.0)
    tr.update([det_at(0, 0, "tree")], 0)
    tr.update([det_at(0, 0, "car")], 1)
    assert len(tr.tracks) == 2


def test_tracks_age_out():
    tr = Tracker(gate=1.0, max_age=2)
    tr.update([det_at(0, 0)], 0)
    for f in range(1, 4):
        tr.update([], f)
    assert tr.tracks == []


def make_track(xs):
    return Track(0, "person", [(i, det_at(x, 0, "person"), np.array([x, 0.0, 0.0])) for i, x in enumerate(xs)])


def test_reject_elongated_examples():
    assert not reject_elongated(make_track([0.0, 0.05, 0.1]), 2.0)
    assert reject_elongated(make_track([0.0, 1.0, 2.0, 3.0, 4.0, 5.0]), 2.0)
    assert not reject_elongated(make_track([0.0, 1.0, 2.0]), 2.0)


def test_tracker_drops_moving_objects():
    tr = Tracker(gate=1.5, class_max_extent={"person": 2.0})
    emitted = [tr.update([det_at(1.0 * f, 0, "person")], f) for f in range(6)]
    assert [len(e) for e in emitted] == [0, 0, 1, 0, 0, 0]
    assert tr.confirmed() == []


@given(st.permutations(list(range(5))))
def test_tracker_invariant_to_detection_order(order):
    pts = [(0, 0), (3, 0), (0, 3), (3, 3), (6, 6)]
    tr = Tracker(gate=1.0)
    for f in range(3):
        tr.update([det_at(*pts[i]) for i in order], f)
    assert sorted(tuple(t.centroid[:2]) for t in tr.confirmed()) == sorted(pts)


def test_noiseless_confirmed_equals_observable_landmarks():
    spec = WorldSpec((0, 40, -8, 8), (ClassSpec("car", "cuboid", 6), ClassSpec("tree", "cylinder", 8)),
                     min_spacing=4.0)
    w = generate_world(spec, 4)
    traj = generate_trajectory([(0, 0), (40, 0)], 1.0)
    sensor = SensorModel(max_range=8.0)
    tr = Tracker(gate=1.0, confirm_threshold=3)
    rng = make_rng(4, "det")
    views = {}
    confirmed = set()
    for k, pose in enumerate(traj.true_poses):
        dets = simulate_detections(pose, w, sensor, rng, key_pose=k)
        for d in dets:
            views[d.source_id] = views.get(d.source_id, 0) + 1
        for trk, d in tr.update(dets, k, pose):
            confirmed.add(d.source_id)
    assert confirmed == {i for i, n in views.items() if n >= 3}
    assert confirmed


# -- trajectories ----------------------------------------------------------------

def test_straight_line_key_poses():
    poses = interpolate_key_poses([(0, 0), (10, 0)], 1.0)
    assert len(poses) == 11
    np.testing.assert_allclose([p.translation[0] for p in poses], np.arange(11), atol=1e-12)


def test_zero_noise_odometry_reproduces_truth():
    t = generate_trajectory([(0, 0), (10, 0), (10, 10)], 0.7)
    for a, b in zip(t.true_poses, t.odometry):
        assert a.allclose(b, atol=1e-12)


def test_degenerate_trajectory():
    with pytest.raises(DegenerateTrajectory):
        generate_trajectory([(0, 0), (0.5, 0)], 1.0)


def test_heading_follows_segment():
    poses = interpolate_key_poses([(0, 0), (0, 5)], 1.0)
    assert all(p.yaw == pytest.approx(math.pi / 2) for p in poses)


def test_terminal_drift_random_walk():
    """Translational sigma 0.01 m per step over 100 steps: terminal x-error std is 0.1 m."""
    errs = []
    for s in range(1000):
        t = generate_trajectory([(0, 0), (100, 0)], 1.0, 0.01, make_rng(s, "drift"))
        errs.append(t.odometry[-1].translation[0] - t.true_poses[-1].translation[0])
    errs = np.array(errs)
    sigma = 0.01 * math.sqrt(100)
    assert abs(errs.mean()) <= 3 * sigma / math.sqrt(len(errs))
    assert abs(errs.std(ddof=1) - sigma) <= 3 * sigma / math.sqrt(2 * (len(errs) - 1))


def test_trajectory_deterministic():
    a = generate_trajectory([(0, 0), (20, 5)], 1.0, [0.01] * 6, make_rng(9, "odom"))
    b = generate_trajectory([(0, 0), (20, 5)], 1.0, [0.01] * 6, make_rng(9, "odom"))
    assert all(np.array_equal(p.matrix, q.matrix) for p, q in zip(a.odometry, b.odometry))


def test_rng_streams_independent_of_creation_order():
    a1 = make_rng(5, "x").random(3)
    make_rng(5, "y").random(10)
    a2 = make_rng(5, "x").random(3)
    np.testing.assert_array_equal(a1, a2)
    assert not np.array_equal(make_rng(5, "x").random(3), make_rng(5, "y").random(3))
