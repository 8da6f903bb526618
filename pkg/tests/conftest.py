"""Shared fixtures for the reconstruction test suite."""
import logging
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from src.core import Volume
from src.forward_model import CONEBEAM, PARALLEL3D, ScanGeometry, uniform_view_angles

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_volume(rng):
    """Random centered 8x7x6 volume (nx, ny, nz)."""
    return Volume.centered(rng.random((6, 7, 8)), voxel_size=1.0)


@pytest.fixture
def parallel_geometry():
    return ScanGeometry(
        mode=PARALLEL3D,
        view_angles=uniform_view_angles(8, 180.0),
        det_rows=10,
        det_channels=14,
        det_pixel_size=1.0,
    )


@pytest.fixture
def cone_geometry():
    return ScanGeometry(
        mode=CONEBEAM,
        view_angles=uniform_view_angles(8, 360.0),
        det_rows=12,
        det_channels=16,
        det_pixel_size=1.5,
        source_to_iso=40.0,
        source_to_det=80.0,
    )


def centered_ball(n: int, radius: float, value: float = 1.0, voxel_size: float = 1.0) -> Volume:
    """Indicator of a ball centered on an n^3 grid."""
    c = 0.5 * (n - 1)
    z, y, x = np.meshgrid(*(np.arange(n) - c for _ in range(3)), indexing="ij")
    data = np.where(x ** 2 + y ** 2 + z ** 2 <= radius ** 2, value, 0.0)
    return Volume.centered(data, voxel_size)


def smooth_blob(n: int, width: float) -> Volume:
    """Centered isotropic Gaussian on an n^3 grid."""
    c = 0.5 * (n - 1)
    z, y, x = np.meshgrid(*(np.arange(n) - c for _ in range(3)), indexing="ij")
    return Volume.centered(np.exp(-(x ** 2 + y ** 2 + z ** 2) / (2.0 * width ** 2)))
