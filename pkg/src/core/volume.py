"""Volume grid type, volume arithmetic and reconstruction metrics."""
import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from ..errors import ShapeMismatchError, ZeroReferenceError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    """Hashable description of a regular isotropic voxel grid."""
    dims: Tuple[int, int, int]
    voxel_size: float
    origin: Tuple[float, float, float]

    @property
    def shape(self) -> Tuple[int, int, int]:
        """Array shape (nz, ny, nx) of volumes living on this grid."""
        nx, ny, nz = self.dims
        return (nz, ny, nx)

    @property
    def num_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def center(self) -> np.ndarray:
        """World coordinates (x, y, z) of the grid's geometric center."""
        return np.asarray(self.origin) + 0.5 * (np.asarray(self.dims) - 1) * self.voxel_size


@dataclass(frozen=True, eq=False)
class Volume:
    """
    3D attenuation map on a regular isotropic grid.

    ``data`` is stored with shape (nz, ny, nx) so that the flattened C-order layout
    has x fastest and z slowest. Values are held in float64 and are read-only.
    """
    data: np.ndarray
    voxel_size: float = 1.0
    origin: Tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ShapeMismatchError(f"Volume data must be a non-empty 3D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("Volume data contains NaN or Inf values")
        if not self.voxel_size > 0:
            raise ValueError(f"voxel_size must be positive, got {self.voxel_size}")
        if len(self.origin) != 3:
            raise ValueError(f"origin must have 3 components, got {self.origin}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @classmethod
    def centered(cls, data: np.ndarray, voxel_size: float = 1.0) -> "Volume":
        """
        Build a volume whose grid center coincides with the world origin.

        The scanner rotation axis passes through the world origin, so centered
        volumes sit on the axis of rotation.

        Args:
            data: Array with shape (nz, ny, nx)
            voxel_size: Edge length of a voxel in mm

        Returns:
            Volume: The centered volume
        """
        shape = np.asarray(np.shape(data))
        nx, ny, nz = shape[2], shape[1], shape[0]
        origin = tuple(-0.5 * (n - 1) * voxel_size for n in (nx, ny, nz))
        return cls(data=data, voxel_size=voxel_size, origin=origin)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Volume":
        return cls(np.zeros(grid.shape), grid.voxel_size, grid.origin)

    @property
    def dims(self) -> Tuple[int, int, int]:
        """Grid size as (nx, ny, nz)."""
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(dims=self.dims, voxel_size=self.voxel_size, origin=self.origin)

    def center(self) -> np.ndarray:
        return self.grid.center()

    def world_axes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Voxel-center coordinates (mm) along x, y and z."""
        return tuple(
            self.origin[axis] + self.voxel_size * np.arange(n)
            for axis, n in enumerate(self.dims)
        )

    def with_data(self, data: np.ndarray) -> "Volume":
        """Return a new volume on the same grid holding ``data``."""
        if np.shape(data) != self.data.shape:
            raise ShapeMismatchError(f"Expected data of shape {self.data.shape}, got {np.shape(data)}")
        return Volume(data=data, voxel_size=self.voxel_size, origin=self.origin)

    def ravel(self) -> np.ndarray:
        """Flat view in the canonical x-fastest order."""
        return self.data.reshape(-1)


@dataclass
class VolumeStats:
    """Error metrics of a reconstruction against a reference."""
    nrmse: float
    rmse: float
    max_abs_diff: float


def check_same_grid(x: Volume, y: Volume) -> None:
    """Raise ShapeMismatchError unless both volumes have equal dims."""
    if x.dims != y.dims:
        raise ShapeMismatchError(f"Volume dims differ: {x.dims} vs {y.dims}")


def volume_axpy(a: float, x: Volume, y: Volume) -> Volume:
    """
    Compute ``a * x + y`` elementwise.

    Args:
        a: Scalar multiplier
        x: Scaled volume; its metadata is copied to the result
        y: Added volume

    Returns:
        Volume: The combination on x's grid
    """
    check_same_grid(x, y)
    if a == 0:
        return x.with_data(y.data)
    return x.with_data(a * x.data + y.data)


def inner_product(x: Volume, y: Volume) -> float:
    check_same_grid(x, y)
    return float(np.dot(x.ravel(), y.ravel()))


def norm(x: Volume) -> float:
    return float(np.linalg.norm(x.ravel()))


def nrmse(recon: Volume, reference: Volume) -> VolumeStats:
    """
    Normalized root mean squared error of ``recon`` against ``reference``.

    Args:
        recon: Reconstructed volume
        reference: Ground truth volume

    Returns:
        VolumeStats: nrmse = ||recon - reference|| / ||reference|| plus rmse and max abs diff
    """
    check_same_grid(recon, reference)
    ref_norm = np.linalg.norm(reference.ravel())
    if ref_norm == 0:
        raise ZeroReferenceError("NRMSE is undefined: the reference volume is all zero")
    diff = recon.ravel() - reference.ravel()
    diff_norm = np.linalg.norm(diff)
    return VolumeStats(
        nrmse=float(diff_norm / ref_norm),
        rmse=float(diff_norm / np.sqrt(diff.size)),
        max_abs_diff=float(np.max(np.abs(diff))),
    )
