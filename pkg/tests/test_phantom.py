"""Tests for phantom rasterization and posed scan simulation."""
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from src.config import BallFeature, EllipsoidFeature, PhantomSpec, PlateFeature, TriangleHole, parse_config
from src.errors import ExperimentConfigError
from src.forward_model import PARALLEL3D, RigidPose, ScanGeometry, apply_pose, forward_project, uniform_view_angles
from src.preprocessing import MIN_VARIANCE, generate_phantom, noise_variance, simulate_pose_scan
from tests.conftest import centered_ball

SHARP = dict(supersample=1, edge_blur=0.0)


def test_empty_phantom_is_zero():
    v = generate_phantom(PhantomSpec(dims=(4, 5, 6), features=[]))
    assert v.data.shape == (6, 5, 4)
    assert_array_equal(v.data, 0.0)


def test_ball_is_rasterized_at_voxel_centers():
    v = generate_phantom(PhantomSpec(dims=(9, 9, 9), features=[BallFeature(radius=2.0, value=1.0)],
                                     max_value=1.0, **SHARP))
    assert v.data[4, 4, 4] == 1.0
    assert v.data[4, 4, 6] == 1.0
    assert v.data[4, 4, 8] == 0.0
    assert v.data.sum() == np.count_nonzero(v.data)


def test_sharp_default_phantom():
    spec = PhantomSpec(**SHARP)
    v = generate_phantom(spec)

    assert v.dims == (32, 32, 32)
    assert v.data.min() == 0.0
    assert v.data.max() == pytest.approx(0.04)
    assert_array_equal(generate_phantom(spec).data, v.data)


def test_default_phantom_is_smooth_and_bounded():
    v = generate_phantom(PhantomSpec())
    sharp = generate_phantom(PhantomSpec(**SHARP))

    assert v.data.min() >= 0.0
    assert v.data.max() <= 0.04
    assert v.data.sum() == pytest.approx(sharp.data.sum(), rel=0.02)
    # blur spreads the edges: neighbouring voxels never jump by the full plate value
    assert np.abs(np.diff(v.data, axis=2)).max() < 0.5 * np.abs(np.diff(sharp.data, axis=2)).max()
    assert_array_equal(generate_phantom(PhantomSpec()).data, v.data)


def test_plate_is_painted_except_in_holes():
    v = generate_phantom(PhantomSpec(**SHARP))
    # plate voxel away from both holes
    assert v.data[22, 19, 21] == pytest.approx(0.04)
    # voxel inside the left triangular hole keeps the additive background
    assert 0.0 < v.data[22, 16, 13] < 0.04


def test_supersampling_gives_partial_volume_at_edges():
    ball = BallFeature(radius=3.0, value=0.02)
    v = generate_phantom(PhantomSpec(dims=(20, 20, 20), features=[ball], supersample=4, edge_blur=0.0))

    partial = (v.data > 0.0) & (v.data < 0.02)
    assert np.count_nonzero(partial) > 0
    assert v.data.max() == pytest.approx(0.02)
    assert v.data.sum() == pytest.approx(0.02 * 4.0 / 3.0 * np.pi * 27.0, rel=0.03)


def test_edge_blur_preserves_mass():
    ball = BallFeature(radius=3.0, value=0.02)
    crisp = generate_phantom(PhantomSpec(dims=(20, 20, 20), features=[ball], edge_blur=0.0))
    blurred = generate_phantom(PhantomSpec(dims=(20, 20, 20), features=[ball], edge_blur=1.25))

    assert blurred.data.sum() == pytest.approx(crisp.data.sum(), rel=1e-9)
    assert blurred.data.max() < crisp.data.max()
    assert blurred.data[10, 10, 2] > 0.0 == crisp.data[10, 10, 2]


def test_negative_feature_values_are_rejected():
    with pytest.raises(ValidationError):
        BallFeature(radius=1.0, value=-0.01)
    with pytest.raises(ValidationError):
        EllipsoidFeature(semi_axes=(1.0, 1.0, 1.0), value=-1e-3)
    with pytest.raises(ExperimentConfigError) as err:
        parse_config('{"phantom": {"features": [{"type": "ball", "radius": 2.0, "value": -0.5}]}}')
    assert "phantom.features.0" in str(err.value)


def test_stacked_features_above_max_value_are_rejected():
    features = [BallFeature(radius=3.0, value=0.03), BallFeature(center=(1.0, 0.0, 0.0), radius=3.0, value=0.03)]
    with pytest.raises(ExperimentConfigError) as err:
        generate_phantom(PhantomSpec(dims=(12, 12, 12), features=features))
    assert "max_value" in str(err.value)

    v = generate_phantom(PhantomSpec(dims=(12, 12, 12), features=features, max_value=0.06, **SHARP))
    assert v.data.max() == pytest.approx(0.06)


def test_overlapping_plates_are_rejected():
    plate = PlateFeature(center=(0.0, 0.0, 0.0), size=(4.0, 4.0, 2.0), value=0.04)
    shifted = PlateFeature(center=(1.0, 0.0, 0.0), size=(4.0, 4.0, 2.0), value=0.02)
    with pytest.raises(ExperimentConfigError) as err:
        generate_phantom(PhantomSpec(dims=(8, 8, 8), features=[plate, shifted]))
    assert "overlap" in str(err.value)


def test_hole_must_stay_inside_plate():
    plate = PlateFeature(
        center=(0.0, 0.0, 0.0),
        size=(12.0, 8.0, 2.0),
        value=0.04,
        holes=[TriangleHole(offset=(5.0, 0.0), side=3.5)],
    )
    with pytest.raises(ExperimentConfigError) as err:
        generate_phantom(PhantomSpec(dims=(16, 16, 16), features=[plate]))
    assert "hole 0" in str(err.value)


# Scan simulation

def _scan_geometry():
    return ScanGeometry(PARALLEL3D, uniform_view_angles(16, 180.0), 12, 12)


def test_noiseless_scan_is_the_clean_projection():
    phantom = centered_ball(8, 3.0, 0.02)
    pose = RigidPose.from_euler(45.0, 30.0, interp="cubic_bspline")
    g = _scan_geometry()

    sino = simulate_pose_scan(phantom, pose, g, alpha=0.0)

    assert_array_equal(sino.data, forward_project(apply_pose(phantom, pose), g).data)
    assert_array_equal(sino.weights, 1.0 / MIN_VARIANCE)


def test_identity_pose_is_not_resampled():
    phantom = centered_ball(8, 3.0, 0.02)
    g = _scan_geometry()
    sino = simulate_pose_scan(phantom, RigidPose.identity("quintic_bspline"), g, alpha=0.0)
    assert_array_equal(sino.data, forward_project(phantom, g).data)


def test_noise_is_reproducible_per_seed():
    phantom = centered_ball(8, 3.0, 0.02)
    pose = RigidPose.identity()
    g = _scan_geometry()

    a = simulate_pose_scan(phantom, pose, g, alpha=1e-4, seed=11)
    b = simulate_pose_scan(phantom, pose, g, alpha=1e-4, seed=11)
    c = simulate_pose_scan(phantom, pose, g, alpha=1e-4, seed=12)

    assert_array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)
    assert_allclose(a.weights, 1e4)


def test_snr_sets_noise_variance():
    phantom = centered_ball(8, 3.0, 0.02)
    g = _scan_geometry()
    clean = forward_project(phantom, g)
    alpha = noise_variance(clean, 20.0)

    sino = simulate_pose_scan(phantom, RigidPose.identity(), g, alpha=None, seed=3, snr_db=20.0)

    assert np.var(sino.data - clean.data) == pytest.approx(alpha, rel=0.15)
    assert_array_equal(sino.weights, 1.0 / alpha)
    assert alpha == pytest.approx(np.mean(clean.data ** 2) / 100.0)


def test_negative_variance_is_rejected():
    with pytest.raises(ValueError):
        simulate_pose_scan(centered_ball(4, 1.0), RigidPose.identity(), _scan_geometry(), alpha=-1.0)
