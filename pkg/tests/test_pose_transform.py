"""Tests for rigid poses and grid resampling."""
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.config import PhantomSpec
from src.core import Volume
from src.errors import PoseError
from src.forward_model import RigidPose, apply_pose, compose_poses, inverse_pose, rotation_matrix, roundtrip_error
from src.preprocessing import generate_phantom
from tests.conftest import centered_ball, smooth_blob


def test_identity_pose_returns_input(small_volume):
    assert apply_pose(small_volume, RigidPose.identity("quintic_bspline")) is small_volume
    assert RigidPose.from_euler(0.0, 0.0).is_identity


@pytest.mark.parametrize("interp, atol", [("trilinear", 1e-12), ("cubic_bspline", 1e-9)])
def test_translation_by_one_voxel(interp, atol, rng):
    v = Volume.centered(rng.random((6, 7, 8)))
    out = apply_pose(v, RigidPose(translation=(1.0, 0.0, 0.0), interp=interp))

    assert out.dims == v.dims
    assert out.origin == v.origin
    assert_allclose(out.data[:, :, 1:], v.data[:, :, :-1], atol=atol)
    assert_allclose(out.data[:, :, 0], 0.0, atol=atol)


def test_quarter_turn_about_z_moves_x_onto_y():
    data = np.zeros((9, 9, 9))
    data[4, 4, 6] = 1.0
    out = apply_pose(Volume.centered(data), RigidPose.from_euler(z_deg=90.0))

    assert out.data[4, 6, 4] == pytest.approx(1.0, abs=1e-9)
    assert out.data.sum() == pytest.approx(1.0, abs=1e-9)


def test_translation_out_of_grid_gives_zeros(small_volume):
    out = apply_pose(small_volume, RigidPose(translation=(100.0, 0.0, 0.0), interp="cubic_bspline"))
    assert_allclose(out.data, 0.0, atol=1e-12)


def test_isotropic_blob_is_rotation_invariant():
    blob = smooth_blob(25, 3.5)
    rotated = apply_pose(blob, RigidPose.from_euler(45.0, 30.0, interp="cubic_bspline"))
    interior = (slice(3, -3),) * 3
    err = np.linalg.norm(rotated.data[interior] - blob.data[interior]) / np.linalg.norm(blob.data[interior])
    assert err < 1e-3


def test_from_euler_rotates_about_z_then_x():
    composite = compose_poses(RigidPose.from_euler(z_deg=45.0), RigidPose.from_euler(x_deg=30.0))
    direct = RigidPose.from_euler(45.0, 30.0)
    assert_allclose(composite.rotation, direct.rotation, atol=1e-15)
    assert_allclose(direct.rotation, rotation_matrix("x", 30.0) @ rotation_matrix("z", 45.0))


def test_compose_with_inverse_is_identity():
    p = RigidPose.from_euler(45.0, 30.0, translation=(1.5, -2.0, 0.5), interp="cubic_bspline")
    q = compose_poses(p, inverse_pose(p))
    assert_allclose(q.rotation, np.eye(3), atol=1e-12)
    assert_allclose(q.translation, 0.0, atol=1e-12)
    assert inverse_pose(p).interp == "cubic_bspline"


def test_pose_validation():
    with pytest.raises(PoseError):
        RigidPose(rotation=2.0 * np.eye(3))
    with pytest.raises(PoseError):
        RigidPose(rotation=np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(PoseError):
        RigidPose(translation=(1.0, 2.0))
    with pytest.raises(PoseError):
        RigidPose(interp="nearest")
    with pytest.raises(PoseError):
        rotation_matrix("w", 10.0)


def test_pose_is_read_only():
    p = RigidPose.from_euler(10.0, 0.0)
    with pytest.raises(ValueError):
        p.rotation[0, 0] = 1.0


def test_roundtrip_error_on_smooth_volume():
    blob = smooth_blob(25, 3.5)
    pose = RigidPose.from_euler(45.0, 30.0)

    cubic = roundtrip_error(blob, pose.with_interp("cubic_bspline"))
    linear = roundtrip_error(blob, pose.with_interp("trilinear"))

    assert cubic < 5e-3
    assert cubic < linear


def test_roundtrip_error_on_phantom():
    """Higher spline orders lose less detail, and the band-limited phantom less than the sharp one."""
    phantom = generate_phantom(PhantomSpec())
    sharp = generate_phantom(PhantomSpec(supersample=1, edge_blur=0.0))
    pose = RigidPose.from_euler(45.0, 30.0)

    cubic = roundtrip_error(phantom, pose.with_interp("cubic_bspline"))
    linear = roundtrip_error(phantom, pose.with_interp("trilinear"))

    assert np.isfinite(cubic)
    assert cubic < linear
    assert cubic < roundtrip_error(sharp, pose.with_interp("cubic_bspline"))


def test_roundtrip_error_of_zero_volume():
    zero = Volume.centered(np.zeros((8, 8, 8)))
    assert roundtrip_error(zero, RigidPose.from_euler(30.0, 0.0)) == 0.0
    assert_array_equal(apply_pose(zero, RigidPose.from_euler(30.0, 0.0)).data, 0.0)


@pytest.mark.parametrize("interp, atol", [("trilinear", 1e-12), ("cubic_bspline", 1e-9)])
def test_apply_pose_is_linear(interp, atol, rng):
    u = Volume.centered(rng.random((9, 10, 11)))
    w = u.with_data(rng.standard_normal(u.data.shape))
    pose = RigidPose.from_euler(45.0, 30.0, translation=(0.7, -0.3, 0.2), interp=interp)

    combined = apply_pose(u.with_data(2.5 * u.data - 1.5 * w.data), pose)

    assert_allclose(combined.data, 2.5 * apply_pose(u, pose).data - 1.5 * apply_pose(w, pose).data, atol=atol)


def test_trilinear_resampling_never_exceeds_input_max(rng):
    v = Volume.centered(rng.standard_normal((12, 12, 12)))
    out = apply_pose(v, RigidPose.from_euler(45.0, 30.0, translation=(0.4, 0.0, -0.9)))
    assert np.abs(out.data).max() <= np.abs(v.data).max() * (1.0 + 1e-12)


def test_cubic_overshoot_on_a_ball_is_bounded():
    ball = centered_ball(15, 4.5)
    out = apply_pose(ball, RigidPose.from_euler(45.0, 30.0, interp="cubic_bspline"))
    assert np.abs(out.data).max() <= 1.5
    assert out.data.max() > 0.9


def _gaussian_ellipsoid(n: int, semi_axes, rotation: np.ndarray) -> np.ndarray:
    """Anisotropic Gaussian evaluated at R^T q on a centered n^3 grid."""
    c = 0.5 * (n - 1)
    z, y, x = np.meshgrid(*(np.arange(n) - c for _ in range(3)), indexing="ij")
    points = np.stack([x.ravel(), y.ravel(), z.ravel()])
    src = rotation.T @ points
    r2 = sum((src[i] / semi_axes[i]) ** 2 for i in range(3))
    return np.exp(-0.5 * r2).reshape(x.shape)


def test_composed_pose_matches_sequential_application():
    """One resampling by the composite and two sequential resamplings both land on the rotated ellipsoid."""
    semi_axes = (4.0, 3.0, 2.5)
    v = Volume.centered(_gaussian_ellipsoid(29, semi_axes, np.eye(3)))
    first = RigidPose.from_euler(z_deg=45.0, interp="cubic_bspline")
    second = RigidPose.from_euler(x_deg=30.0, interp="cubic_bspline")
    composite = compose_poses(first, second)
    expected = _gaussian_ellipsoid(29, semi_axes, composite.rotation)

    once = apply_pose(v, composite).data
    twice = apply_pose(apply_pose(v, first), second).data

    for result in (once, twice):
        assert np.linalg.norm(result - expected) / np.linalg.norm(expected) < 1e-2
    # sequential resampling interpolates twice
    assert np.abs(once - twice).max() > 1e-9
