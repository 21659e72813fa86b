import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rowtracker.errors import DimensionMismatch, InvalidSpec, NonPositiveDepth
from rowtracker.geom import (
    Calibration,
    Intrinsics,
    Transform,
    back_project,
    camera_motion,
    default_extrinsics,
    format_calibration,
    parse_calibration,
    project,
    rail_motion,
    reproject_mask,
    warp_mask,
)
from rowtracker.masks import Mask, closing, disk


def homogeneous(T):
    m = np.eye(4)
    m[:3, :3] = T.rotation
    m[:3, 3] = T.translation
    return m


angles = st.floats(-np.pi, np.pi, allow_nan=False)
coords = st.floats(-5, 5, allow_nan=False)


@st.composite
def transforms(draw):
    axis = draw(st.tuples(coords, coords, coords).filter(lambda a: np.linalg.norm(a) > 1e-3))
    t = draw(st.tuples(coords, coords, coords))
    return Transform.from_axis_angle(axis, draw(angles), t)


# -- projection ---------------------------------------------------------------


def test_project_examples(K600):
    assert np.allclose(project([0, 0, 1], K600), [640, 360])
    assert np.allclose(project([0.2, 0.4, 1.0], K600), [760, 600])
    with pytest.raises(NonPositiveDepth):
        project([0, 0, 0], K600)
    with pytest.raises(NonPositiveDepth):
        project([[0, 0, 1], [0, 0, -1]], K600)


def test_back_project_examples(K600):
    assert np.allclose(back_project([640, 360], 1.0, K600), [0, 0, 1])
    assert np.allclose(back_project([760, 600], 1.0, K600), [0.2, 0.4, 1.0])
    with pytest.raises(NonPositiveDepth):
        back_project([100, 100], 0.0, K600)


def test_project_may_leave_image(K600):
    u, v = project([5.0, 0.0, 1.0], K600)
    assert u > K600.width


@given(
    st.floats(0, 1279.999),
    st.floats(0, 719.999),
    st.floats(0.01, 50.0),
)
def test_roundtrip_property(u, v, d):
    K = Intrinsics(911.0, 905.5, 640.3, 359.7, 1280, 720)
    assert np.abs(project(back_project([u, v], d, K), K) - [u, v]).max() < 1e-9


@pytest.mark.parametrize(
    "kw",
    [
        dict(fx=0.0),
        dict(fy=-1.0),
        dict(cx=1280.0),
        dict(cy=-0.5),
    ],
)
def test_intrinsics_invariants(kw):
    base = dict(fx=600.0, fy=600.0, cx=640.0, cy=360.0, width=1280, height=720)
    with pytest.raises(InvalidSpec):
        Intrinsics(**{**base, **kw})


def test_default_intrinsics_and_scaling():
    K = Intrinsics.default()
    assert (K.width, K.height) == (1280, 720)
    # a fruit centre at 0.5 m stays in view for 40 frames at 0.2 m/s and 15 Hz
    assert K.width * 0.5 / K.fx / (0.2 / 15) == pytest.approx(40.0)
    half = K.scaled(0.5)
    assert (half.width, half.height, half.fx) == (640, 360, 600.0)
    assert K.matrix[0, 0] == K.fx and K.matrix[1, 2] == K.cy


# -- transforms ---------------------------------------------------------------


def test_transform_rejects_non_rotation():
    with pytest.raises(InvalidSpec):
        Transform(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(InvalidSpec):
        Transform(np.eye(3) * 1.001)
    with pytest.raises(InvalidSpec):
        Transform(np.eye(3), [np.nan, 0, 0])


@given(transforms())
def test_compose_with_inverse_is_identity(T):
    assert (T @ T.inverse()).allclose(Transform.identity(), atol=1e-9)
    assert (T.inverse() @ T).allclose(Transform.identity(), atol=1e-9)


@given(transforms(), transforms(), st.tuples(coords, coords, coords))
def test_compose_matches_homogeneous_oracle(A, B, p):
    assert np.abs(homogeneous(A @ B) - homogeneous(A) @ homogeneous(B)).max() < 1e-9
    ph = homogeneous(A) @ homogeneous(B) @ np.append(p, 1.0)
    assert np.allclose((A @ B).apply(p), ph[:3], atol=1e-9)


@given(transforms())
def test_camera_motion_identities(T):
    I = Transform.identity()
    assert camera_motion(I, T).allclose(I, atol=1e-12)
    assert camera_motion(T, I).allclose(T, atol=1e-12)


def test_camera_motion_yaw_example():
    T_ec = Transform.from_axis_angle((0, 0, 1), np.pi / 2)
    Te = Transform.from_translation((0.1, 0.0, 0.0))
    Tc = camera_motion(Te, T_ec)
    oracle = np.linalg.inv(homogeneous(T_ec)) @ homogeneous(Te) @ homogeneous(T_ec)
    assert np.abs(Tc.matrix - oracle).max() < 1e-12
    # a pure translation stays a pure translation, expressed in camera axes
    assert np.allclose(Tc.rotation, np.eye(3))
    assert np.allclose(Tc.translation, [0.0, -0.1, 0.0])


def test_rail_motion_moves_scene_left_in_image():
    K = Intrinsics.default()
    T_ec = default_extrinsics()
    p_cam = np.array([0.0, 0.0, 0.7])
    Tc = camera_motion(rail_motion(0.0, 0.05), T_ec)
    u0 = project(p_cam, K)[0]
    u1 = project(Tc.apply(p_cam), K)[0]
    assert u1 == pytest.approx(u0 - K.fx * 0.05 / 0.7)


def test_default_extrinsics_axes():
    T = default_extrinsics()
    # camera z (optical axis) looks along platform +y, camera y (down) is platform -z
    assert np.allclose(T.rotation @ [0, 0, 1], [0, 1, 0])
    assert np.allclose(T.rotation @ [0, 1, 0], [0, 0, -1])
    assert np.allclose(T.rotation @ [1, 0, 0], [1, 0, 0])


# -- mask re-projection ---------------------------------------------------------


def test_reproject_identity_keeps_valid_pixels(K600):
    mask = disk(K600.width, K600.height, 300.0, 200.0, 15.0)
    depth = np.full(K600.shape, 1.0)
    depth[:, :300] = 0.0  # left half of the disk has no depth
    out = reproject_mask(mask, depth, Transform.identity(), K600)
    u, v = mask.pixels()
    keep = u >= 300
    expected = Mask.from_pixels(K600.width, K600.height, u[keep], v[keep])
    assert out == expected


def test_reproject_translation_per_pixel_oracle(K600):
    mask = disk(K600.width, K600.height, 500.3, 300.0, 25.0)
    depth = np.full(K600.shape, 1.0)
    Tc = Transform.from_translation((-0.1, 0.0, 0.0))
    out = reproject_mask(mask, depth, Tc, K600)
    # each pixel independently: u' = fx * (x - 0.1) / 1 + cx = u - 60
    u, v = mask.pixels()
    ut = np.floor(600.0 * ((u - 640.0) / 600.0 - 0.1) + 640.0 + 0.5).astype(int)
    oracle = closing(Mask.from_pixels(K600.width, K600.height, ut, v))
    assert out == oracle
    assert out.centroid[0] - mask.centroid[0] == pytest.approx(-60.0, abs=1.0)


def test_reproject_out_of_view_is_empty(K600):
    mask = disk(K600.width, K600.height, 10.0, 300.0, 8.0)
    depth = np.full(K600.shape, 1.0)
    out = reproject_mask(mask, depth, Transform.from_translation((-0.5, 0, 0)), K600)
    assert out.empty


def test_reproject_dimension_mismatch(K600):
    mask = disk(640, 360, 100.0, 100.0, 5.0)
    with pytest.raises(DimensionMismatch):
        reproject_mask(mask, np.ones((360, 640)), Transform.identity(), K600)


@given(
    st.floats(40, 600),
    st.floats(40, 320),
    st.floats(2.0, 30.0),
    st.floats(0.3, 3.0),
)
def test_identity_reprojection_preserves_area(cu, cv, r, d):
    K = Intrinsics(600.0, 600.0, 320.0, 180.0, 640, 360)
    mask = disk(K.width, K.height, cu, cv, r)
    out = reproject_mask(mask, np.full(K.shape, d), Transform.identity(), K)
    assert abs(out.area - mask.area) <= 0.05 * mask.area


def test_warp_keeps_nearest_depth():
    K = Intrinsics(100.0, 100.0, 50.0, 50.0, 100, 100)
    # (50, 50) at 2 m is (0, 0, 2); (60, 50) at 1 m is (0.1, 0, 1).  Shifting
    # x by -0.2 m sends both onto pixel (40, 50); the nearer point must win.
    mask = Mask.from_pixels(100, 100, [50, 60], [50, 50])
    out, depths = warp_mask(mask, [2.0, 1.0], Transform.from_translation((-0.2, 0, 0)), K)
    u, v = out.pixels()
    assert out.area == 1
    assert (u[0], v[0]) == (40, 50)
    assert depths[0] == pytest.approx(1.0)


def test_warp_drops_invalid_depth():
    K = Intrinsics(100.0, 100.0, 50.0, 50.0, 100, 100)
    mask = Mask.from_pixels(100, 100, [10, 20], [10, 10])
    out, depths = warp_mask(mask, [0.0, 1.0], Transform.identity(), K)
    assert out.area == 1 and out.pixels()[0][0] == 20
    out, _ = warp_mask(mask, [0.0, 0.0], Transform.identity(), K)
    assert out.empty


# -- calibration files --------------------------------------------------------


def test_calibration_roundtrip():
    calib = Calibration(Intrinsics(612.5, 611.0, 320.25, 240.5, 640, 480), default_extrinsics())
    back = parse_calibration(format_calibration(calib))
    assert back.intrinsics == calib.intrinsics
    assert back.extrinsics.allclose(calib.extrinsics, atol=0)


def test_calibration_errors():
    text = format_calibration(Calibration.default())
    with pytest.raises(InvalidSpec):
        parse_calibration(text.replace("fx =", "# fx ="))
    with pytest.raises(InvalidSpec):
        parse_calibration(text.replace("T_ec = ", "T_ec = 1 "))
    with pytest.raises(InvalidSpec):
        parse_calibration(text + "garbage line\n")
