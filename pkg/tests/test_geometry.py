import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import poses, random_pose, twists
from msslam.errors import NearPiRotation
from msslam.geometry import (CuboidModel, CylinderModel, EllipsoidModel, Pose, compose, hat, inverse, relative,
                             rot_x, rot_z, se3_exp, se3_log, shape_from_params, so3_exp, so3_log, vee, wrap_angle,
                             yaw_of)


def hom(R, t):
    m = np.eye(4)
    m[:3, :3] = R
    m[:3, 3] = t
    return m


def expm_series(xi, terms=20):
    """Truncated power series of the 4x4 twist matrix."""
    X = np.zeros((4, 4))
    X[:3, :3] = hat(xi[3:])
    X[:3, 3] = xi[:3]
    out, term = np.eye(4), np.eye(4)
    for k in range(1, terms):
        term = term @ X / k
        out = out + term
    return out


# -- compose / inverse / relative ------------------------------------------------

def test_compose_identity():
    p = Pose.from_xyz_yaw(1.0, -2.0, 0.5, 0.3)
    assert compose(Pose.identity(), p).allclose(p)


def test_compose_pure_translations():
    out = compose(Pose.from_translation(1, 0, 0), Pose.from_translation(0, 2, 0))
    assert out.allclose(Pose.from_translation(1, 2, 0))


def test_compose_yaw_then_translation_matches_homogeneous_product():
    a = Pose(rot_z(math.pi / 2), [1.0, 0.0, 0.0])
    b = Pose.from_translation(1, 0, 0)
    oracle = hom(rot_z(math.pi / 2), [1, 0, 0]) @ hom(np.eye(3), [1, 0, 0])
    out = compose(a, b)
    np.testing.assert_allclose(out.matrix, oracle, atol=1e-12)
    np.testing.assert_allclose(out.translation, [1.0, 1.0, 0.0], atol=1e-12)
    assert out.yaw == pytest.approx(math.pi / 2)


def test_inverse_examples():
    assert inverse(Pose.identity()).allclose(Pose.identity())
    assert inverse(Pose.from_translation(3, 0, 0)).allclose(Pose.from_translation(-3, 0, 0))
    p = Pose(rot_z(math.radians(30)), [1.0, 2.0, 0.0])
    np.testing.assert_allclose(inverse(p).matrix, np.linalg.inv(p.matrix), atol=1e-12)


def test_relative_examples():
    p = Pose.from_xyz_yaw(3, 1, 2, 0.7)
    assert relative(p, p).allclose(Pose.identity())
    assert relative(Pose.identity(), p).allclose(p)
    r = relative(Pose(rot_z(math.pi / 4), np.zeros(3)), Pose(rot_z(math.pi / 2), np.zeros(3)))
    np.testing.assert_allclose(r.matrix, hom(rot_z(math.pi / 4), np.zeros(3)), atol=1e-12)


@given(poses(), poses(), poses())
def test_compose_associative(a, b, c):
    assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)), atol=1e-9)


@given(poses())
def test_inverse_two_sided(p):
    assert compose(p, inverse(p)).allclose(Pose.identity(), atol=1e-9)
    assert compose(inverse(p), p).allclose(Pose.identity(), atol=1e-9)


@given(poses(), poses())
def test_relative_recovers_target(a, b):
    assert compose(a, relative(a, b)).allclose(b, atol=1e-9)


@given(poses())
def test_rotation_is_orthonormal(p):
    np.testing.assert_allclose(p.rotation @ p.rotation.T, np.eye(3), atol=1e-9)
    assert np.linalg.det(p.rotation) == pytest.approx(1.0, abs=1e-9)


# -- exp / log -------------------------------------------------------------------

def test_log_identity_is_zero():
    np.testing.assert_array_equal(se3_log(Pose.identity()), np.zeros(6))


def test_exp_pure_translation():
    assert se3_exp([1, 0, 0, 0, 0, 0]).allclose(Pose.from_translation(1, 0, 0))


def test_exp_matches_power_series():
    xi = np.array([1.0, 0.0, 0.0, 0.0, 0.0, math.pi / 2])
    np.testing.assert_allclose(se3_exp(xi).matrix, expm_series(xi), atol=1e-12)


def test_exp_matches_power_series_random(rng):
    for _ in range(50):
        xi = np.concatenate([rng.uniform(-2, 2, 3), rng.uniform(-1.5, 1.5, 3)])
        np.testing.assert_allclose(se3_exp(xi).matrix, expm_series(xi, 40), atol=1e-10)


def test_exp_log_round_trip_1000(rng):
    worst = 0.0
    for _ in range(1000):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        xi = np.concatenate([rng.uniform(-10, 10, 3), axis * rng.uniform(0, math.pi - 0.01)])
        worst = max(worst, float(np.max(np.abs(se3_log(se3_exp(xi)) - xi))))
    assert worst < 1e-8


@given(twists())
def test_exp_log_round_trip_property(xi):
    np.testing.assert_allclose(se3_log(se3_exp(xi)), xi, atol=1e-8)


@given(poses())
def test_log_exp_round_trip_pose(p):
    assert se3_exp(se3_log(p)).allclose(p, atol=1e-9)


def test_log_near_pi_raises():
    R = so3_exp([0.0, 0.0, math.pi - 1e-8])
    with pytest.raises(NearPiRotation):
        so3_log(R)
    with pytest.raises(NearPiRotation):
        se3_log(Pose(R, np.zeros(3)))


def test_so3_log_small_angles(rng):
    for s in (1e-12, 1e-8, 1e-5, 1e-3):
        phi = rng.normal(size=3)
        phi *= s / np.linalg.norm(phi)
        np.testing.assert_allclose(so3_log(so3_exp(phi)), phi, atol=1e-15 + 1e-9 * s)


def test_hat_vee_inverse(rng):
    v = rng.normal(size=3)
    np.testing.assert_array_equal(vee(hat(v)), v)
    np.testing.assert_allclose(hat(v) @ np.ones(3), np.cross(v, np.ones(3)))


# -- yaw -------------------------------------------------------------------------

def test_yaw_examples():
    assert yaw_of(Pose.identity()) == 0.0
    assert yaw_of(Pose(rot_z(math.pi / 2), np.zeros(3))) == pytest.approx(math.pi / 2)
    R = rot_z(math.radians(170)) @ rot_x(math.radians(5))
    x_axis = R[:, 0]
    oracle = math.atan2(x_axis[1], x_axis[0])
    assert yaw_of(Pose(R, np.zeros(3))) == pytest.approx(oracle, abs=1e-12)
    assert math.degrees(yaw_of(Pose(R, np.zeros(3)))) == pytest.approx(170.0, abs=1e-3 * 180 / math.pi)


@given(st.floats(-math.pi + 1e-9, math.pi))
def test_yaw_of_pure_yaw(a):
    assert yaw_of(Pose(rot_z(a), np.zeros(3))) == pytest.approx(a, abs=1e-12)


def test_wrap_angle_half_open():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


@given(st.floats(-100, 100))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


def test_quaternion_matches_scipy_convention():
    p = Pose(rot_z(math.pi / 2), np.zeros(3))
    w, x, y, z = p.quaternion()
    assert (w, x, y) == pytest.approx((math.sqrt(0.5), 0.0, 0.0))
    assert z == pytest.approx(math.sqrt(0.5))


# -- shape models ----------------------------------------------------------------

def test_shape_constructors_reject_non_positive():
    with pytest.raises(ValueError):
        CuboidModel(np.zeros(3), np.zeros(3), [1.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        CylinderModel(np.zeros(3), [0, 0, 1], 0.0)
    with pytest.raises(ValueError):
        CylinderModel(np.zeros(3), [0, 0, 0], 1.0)
    with pytest.raises(ValueError):
        EllipsoidModel(np.zeros(3), [-1.0, 1.0])


def test_cylinder_axis_normalised():
    c = CylinderModel(np.zeros(3), [0, 0, 2.0], 0.3)
    assert np.linalg.norm(c.n) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("shape", [
    CuboidModel([0.1, -0.2, 0.3], [1, 2, 3], [4, 2, 1.5]),
    CylinderModel([1, 2, 0], [0, 0, 1], 0.3),
    EllipsoidModel([1, 2, 0.5], [0.3, 0.8]),
])
def test_shape_params_round_trip(shape):
    back = shape_from_params(shape.kind, shape.params)
    np.testing.assert_array_equal(back.params, shape.params)


@given(poses())
def test_transformed_moves_centroid(T):
    for shape in (CuboidModel([0.1, -0.2, 0.3], [1, 2, 3], [4, 2, 1.5]),
                  CylinderModel([1, 2, 0], [0, 0, 1], 0.3),
                  EllipsoidModel([1, 2, 0.5], [0.3, 0.8])):
        out = shape.transformed(T)
        np.testing.assert_allclose(out.centroid, T.act(shape.centroid), atol=1e-9)
        np.testing.assert_allclose(out.size, shape.size)


def test_cuboid_transform_composes_pose(rng):
    cub = CuboidModel([0.1, -0.2, 0.3], [1, 2, 3], [4, 2, 1.5])
    T = random_pose(rng)
    np.testing.assert_allclose(cub.transformed(T).pose.matrix, T.matrix @ cub.pose.matrix, atol=1e-9)


def test_unknown_kind():
    with pytest.raises(ValueError):
        shape_from_params("sphere", [0, 0, 0])
