"""Camera models, poses, depth I/O, analytic flow, and rectification."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from nightflow.fisheye import (
    DepthMap,
    Pinhole,
    Poly4,
    RigidPose,
    analytic_flow,
    camera_from_json,
    camera_to_json,
    load_camera,
    load_depth,
    load_pose,
    pose_from_json,
    pose_to_json,
    project,
    project_many,
    read_pfm,
    rectify,
    save_camera,
    save_pose,
    solid_angle_map,
    unproject,
    unproject_many,
    write_pfm,
)

PINHOLE = Pinhole(width=128, height=96, fx=110.0, fy=100.0, cx=63.5, cy=47.5)
# Equidistant-style lens covering a bit more than 180 degrees end to end.
FISHEYE = Poly4(
    width=128, height=128, k1=63.5 / (np.pi / 2), k2=0.0, k3=0.0, k4=0.0,
    cx=63.5, cy=63.5,
)


def interior_pixels(rng, cam, n, margin=0.0):
    xs = rng.uniform(margin, cam.width - 1 - margin, n)
    ys = rng.uniform(margin, cam.height - 1 - margin, n)
    return np.stack([xs, ys], axis=-1)


# --- model construction -----------------------------------------------------


def test_pinhole_validation():
    with pytest.raises(ValueError):
        Pinhole(width=0, height=4, fx=1, fy=1, cx=0, cy=0)
    with pytest.raises(ValueError):
        Pinhole(width=4, height=4, fx=-1, fy=1, cx=0, cy=0)


def test_poly4_needs_positive_leading_coefficient():
    with pytest.raises(ValueError):
        Poly4(width=8, height=8, k1=0.0, k2=0.0, k3=0.0, k4=0.0, cx=3.5, cy=3.5)


def test_poly4_equidistant_worked_example():
    cam = Poly4(width=201, height=201, k1=100.0, k2=0.0, k3=0.0, k4=0.0, cx=100.0, cy=100.0)
    # Corner distance is 100*sqrt(2); equidistant theta_max follows directly.
    assert cam.theta_max == pytest.approx(np.sqrt(2.0), abs=1e-9)
    assert cam.r_max == pytest.approx(100.0 * np.sqrt(2.0), abs=1e-6)
    px, py = project(cam, np.array([np.sin(np.pi / 4), 0.0, np.cos(np.pi / 4)]))
    assert px == pytest.approx(100.0 + 100.0 * np.pi / 4, abs=1e-9)
    assert py == pytest.approx(100.0, abs=1e-9)


def test_poly4_monotonicity_cap():
    """A polynomial that peaks inside [0, pi] caps theta_max at its peak."""
    cam = Poly4(
        width=4001, height=4001, k1=100.0, k2=-40.0, k3=0.0, k4=0.0,
        cx=2000.0, cy=2000.0,
    )
    assert cam.theta_max == pytest.approx(100.0 / 80.0, rel=1e-3)


# --- projection round trips -------------------------------------------------


@pytest.mark.parametrize("cam", [PINHOLE, FISHEYE], ids=["pinhole", "fisheye"])
def test_project_unproject_round_trip(cam):
    rng = np.random.default_rng(0)
    pix = interior_pixels(rng, cam, 300)
    rays, ok = unproject_many(cam, pix)
    assert ok.all()
    np.testing.assert_allclose(np.linalg.norm(rays, axis=-1), 1.0, atol=1e-12)
    back, ok2 = project_many(cam, rays)
    assert ok2.all()
    assert np.abs(back - pix).max() < 1e-6


def test_unproject_center_is_optical_axis():
    ray = unproject(PINHOLE, (PINHOLE.cx, PINHOLE.cy))
    np.testing.assert_allclose(ray, [0.0, 0.0, 1.0], atol=1e-12)
    ray = unproject(FISHEYE, (FISHEYE.cx, FISHEYE.cy))
    np.testing.assert_allclose(ray, [0.0, 0.0, 1.0], atol=1e-12)


def test_project_scalar_errors():
    with pytest.raises(ValueError):
        project(PINHOLE, np.zeros(3))
    with pytest.raises(ValueError):
        project(PINHOLE, np.array([0.0, 0.0, -1.0]))
    with pytest.raises(ValueError):
        # Incidence angle beyond the fisheye's resolvable range.
        project(FISHEYE, np.array([0.0, -np.sin(3.0), np.cos(3.0)]))


def test_project_many_flags_instead_of_raising():
    pts = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [0.0, 0.0, 0.0]])
    pix, ok = project_many(PINHOLE, pts)
    np.testing.assert_array_equal(ok, [True, False, False])
    np.testing.assert_allclose(pix[0], [PINHOLE.cx, PINHOLE.cy], atol=1e-12)


def test_unproject_scalar_errors():
    with pytest.raises(ValueError):
        unproject(PINHOLE, (-5.0, 10.0))
    big = Poly4(width=1001, height=1001, k1=50.0, k2=0.0, k3=0.0, k4=0.0, cx=500.0, cy=500.0)
    # Inside the frame but beyond the radius the polynomial can explain.
    with pytest.raises(ValueError):
        unproject(big, (1000.0, 500.0))


# --- serialization ----------------------------------------------------------


@pytest.mark.parametrize("cam", [PINHOLE, FISHEYE], ids=["pinhole", "fisheye"])
def test_camera_json_round_trip(cam):
    assert camera_from_json(camera_to_json(cam)) == cam


def test_camera_file_round_trip(tmp_path):
    path = tmp_path / "cam.json"
    save_camera(path, FISHEYE)
    assert load_camera(path) == FISHEYE


def test_camera_unknown_kind():
    doc = camera_to_json(PINHOLE)
    doc["kind"] = "orthographic"
    with pytest.raises(ValueError):
        camera_from_json(doc)


# --- rigid poses ------------------------------------------------------------


def test_pose_identity():
    pose = RigidPose.identity()
    p = np.array([[1.0, 2.0, 3.0]])
    np.testing.assert_allclose(pose.apply(p), p, atol=1e-15)


def test_pose_renormalizes_slightly_off_quaternions():
    q = np.array([1.0, 0.0, 0.0, 0.0]) * (1 + 5e-7)
    pose = RigidPose(tuple(q), (0.0, 0.0, 0.0))
    np.testing.assert_allclose(np.linalg.norm(pose.rotation), 1.0, atol=1e-12)


def test_pose_rejects_far_from_unit():
    with pytest.raises(ValueError):
        RigidPose((1.1, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0))


def test_pose_matches_scipy_rotation():
    rng = np.random.default_rng(1)
    for _ in range(20):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(-np.pi, np.pi)
        t = tuple(rng.standard_normal(3))
        pose = RigidPose.from_axis_angle(axis, angle, t)
        want_r = Rotation.from_rotvec(axis * angle).as_matrix()
        np.testing.assert_allclose(pose.matrix, want_r, atol=1e-12)
        pts = rng.standard_normal((5, 3))
        np.testing.assert_allclose(pose.apply(pts), pts @ want_r.T + t, atol=1e-12)


def test_pose_json_round_trip(tmp_path):
    pose = RigidPose.from_axis_angle(np.array([0.0, 1.0, 0.0]), 0.3, (0.1, -0.2, 0.05))
    assert pose_from_json(pose_to_json(pose)) == pose
    path = tmp_path / "pose.json"
    save_pose(path, pose)
    assert load_pose(path) == pose


# --- depth I/O --------------------------------------------------------------


def test_depth_map_validation():
    with pytest.raises(ValueError):
        DepthMap(np.full((2, 2), -1.0), np.ones((2, 2), bool))
    # Negative values are fine where masked out.
    d = DepthMap(np.array([[1.0, -1.0]]), np.array([[True, False]]))
    assert d.valid.sum() == 1


def test_pfm_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    data = rng.random((7, 5)).astype(np.float32) * 10
    path = tmp_path / "depth.pfm"
    write_pfm(path, data)
    back = read_pfm(path)
    np.testing.assert_array_equal(back, data)


def test_pfm_orientation(tmp_path):
    """Row order must survive the bottom-up file layout."""
    data = np.arange(6, dtype=np.float32).reshape(3, 2)
    path = tmp_path / "ramp.pfm"
    write_pfm(path, data)
    np.testing.assert_array_equal(read_pfm(path), data)


def test_pfm_rejects_color(tmp_path):
    path = tmp_path / "color.pfm"
    path.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)
    with pytest.raises(ValueError):
        read_pfm(path)


def test_load_depth_z_convention(tmp_path):
    z = np.full((PINHOLE.height, PINHOLE.width), 5.0, dtype=np.float32)
    path = tmp_path / "z.pfm"
    write_pfm(path, z)
    d = load_depth(path, cam=PINHOLE, convention="z")
    grid = np.stack(
        np.meshgrid(np.arange(128.0), np.arange(96.0)), axis=-1
    )
    rays, _ = unproject_many(PINHOLE, grid)
    np.testing.assert_allclose(d.values, 5.0 / rays[..., 2], rtol=1e-6)


def test_load_depth_along_ray_is_verbatim(tmp_path):
    vals = np.full((4, 4), 2.5, dtype=np.float32)
    path = tmp_path / "d.pfm"
    write_pfm(path, vals)
    d = load_depth(path)
    np.testing.assert_array_equal(d.values, 2.5)
    assert d.valid.all()


# --- solid angles -----------------------------------------------------------


def test_pinhole_solid_angle_total():
    """Pixel-summed solid angle matches the closed-form rectangle formula."""
    cam = Pinhole(width=128, height=128, fx=64.0, fy=64.0, cx=63.5, cy=63.5)
    a = cam.width / cam.fx
    b = cam.height / cam.fy
    want = 4 * np.arctan(a * b / (2 * np.sqrt(4 + a * a + b * b)))
    got = solid_angle_map(cam).sum()
    assert got == pytest.approx(want, rel=5e-3)


def test_fisheye_solid_angle_disk():
    """Summing over a centered disk approximates a spherical-cap area."""
    omega = solid_angle_map(FISHEYE)
    ys, xs = np.mgrid[0:128, 0:128].astype(float)
    r = np.hypot(xs - FISHEYE.cx, ys - FISHEYE.cy)
    radius = 40.0
    got = omega[r <= radius].sum()
    want = 2 * np.pi * (1 - np.cos(radius / FISHEYE.k1))
    assert got == pytest.approx(want, rel=0.04)


# --- analytic flow ----------------------------------------------------------


def flat_z_depth(cam, z):
    grid = np.stack(
        np.meshgrid(np.arange(float(cam.width)), np.arange(float(cam.height))),
        axis=-1,
    )
    rays, ok = unproject_many(cam, grid)
    values = np.where(ok, z / np.clip(rays[..., 2], 1e-9, None), 1.0)
    return DepthMap(values, ok)


def test_identity_pose_zero_flow():
    depth = flat_z_depth(PINHOLE, 5.0)
    flow = analytic_flow(depth, RigidPose.identity(), PINHOLE)
    assert flow.valid.all()
    assert np.abs(flow.u).max() < 1e-9
    assert np.abs(flow.v).max() < 1e-9


def test_pinhole_lateral_translation_worked_example():
    """Fronto-parallel plane at Z=5, t=(0.5,0,0), fx=100 -> flow (10, 0)."""
    cam = Pinhole(width=64, height=48, fx=100.0, fy=100.0, cx=31.5, cy=23.5)
    depth = flat_z_depth(cam, 5.0)
    pose = RigidPose.identity()
    pose = RigidPose(pose.rotation, (0.5, 0.0, 0.0))
    flow = analytic_flow(depth, pose, cam)
    assert flow.valid.all()
    np.testing.assert_allclose(flow.u, 10.0, atol=1e-9)
    np.testing.assert_allclose(flow.v, 0.0, atol=1e-9)


def test_rotation_flow_is_depth_invariant():
    pose = RigidPose.from_axis_angle(np.array([0.0, 1.0, 0.0]), 0.02, (0.0, 0.0, 0.0))
    near = analytic_flow(flat_z_depth(FISHEYE, 2.0), pose, FISHEYE)
    far = analytic_flow(flat_z_depth(FISHEYE, 50.0), pose, FISHEYE)
    both = near.valid & far.valid
    assert both.any()
    assert np.abs(near.u - far.u)[both].max() < 1e-6
    assert np.abs(near.v - far.v)[both].max() < 1e-6


def test_flow_keeps_off_image_projections_valid():
    """Points that project outside the frame still carry a defined flow."""
    cam = Pinhole(width=32, height=32, fx=100.0, fy=100.0, cx=15.5, cy=15.5)
    depth = flat_z_depth(cam, 2.0)
    pose = RigidPose(RigidPose.identity().rotation, (2.0, 0.0, 0.0))
    flow = analytic_flow(depth, pose, cam)
    assert flow.valid.all()
    np.testing.assert_allclose(flow.u, 100.0, atol=1e-9)


def test_invalid_depth_propagates():
    depth = flat_z_depth(PINHOLE, 5.0)
    holes = depth.valid.copy()
    holes[10:20, 10:20] = False
    depth = DepthMap(depth.values, holes)
    flow = analytic_flow(depth, RigidPose.identity(), PINHOLE)
    assert not flow.valid[15, 15]
    assert flow.u[15, 15] == 0.0


def test_depth_shape_mismatch():
    with pytest.raises(ValueError):
        analytic_flow(flat_z_depth(PINHOLE, 1.0), RigidPose.identity(), FISHEYE)


# --- rectification ----------------------------------------------------------


def checkerboard(h, w, cell=8):
    ys, xs = np.mgrid[0:h, 0:w]
    return (((ys // cell) + (xs // cell)) % 2).astype(np.float64)


def test_rectify_identity():
    img = checkerboard(96, 128)
    out, retained = rectify(img, PINHOLE, PINHOLE)
    assert retained == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(out, img, atol=1e-9)


def test_rectify_narrowing_loses_solid_angle():
    img = checkerboard(128, 128)
    narrow = Pinhole(width=128, height=128, fx=63.5 / np.tan(np.pi / 4), fy=63.5 / np.tan(np.pi / 4), cx=63.5, cy=63.5)
    out, retained = rectify(img, FISHEYE, narrow)
    assert out.shape == (128, 128)
    assert 0.0 < retained < 0.5


def test_rectify_fills_unreachable_with_black():
    img = np.ones((128, 128))
    narrow = Pinhole(width=128, height=128, fx=128.0, fy=128.0, cx=63.5, cy=63.5)
    wide = Pinhole(width=128, height=128, fx=20.0, fy=20.0, cx=63.5, cy=63.5)
    out, _ = rectify(img, narrow, wide)
    assert out.min() == 0.0
    assert out.max() == 1.0
