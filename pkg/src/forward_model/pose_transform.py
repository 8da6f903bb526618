"""Rigid-body pose transforms T_k realized as pull-back grid resampling."""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from ..core import Volume, norm
from ..errors import PoseError

logger = logging.getLogger(__name__)

# Spline order per interpolation mode
INTERP_ORDERS = {
    "trilinear": 1,
    "cubic_bspline": 3,
    "quintic_bspline": 5,
}

_ORTHONORMAL_TOL = 1e-12


def rotation_matrix(axis: str, degrees: float) -> np.ndarray:
    """
    Proper rotation about a coordinate axis, right-handed.

    Args:
        axis: One of "x", "y", "z"
        degrees: Rotation angle

    Returns:
        np.ndarray: 3x3 rotation matrix acting on (x, y, z) column vectors
    """
    c, s = np.cos(np.deg2rad(degrees)), np.sin(np.deg2rad(degrees))
    if axis == "x":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == "y":
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    if axis == "z":
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    raise PoseError(f"Unknown rotation axis {axis!r}")


@dataclass(frozen=True, eq=False)
class RigidPose:
    """
    Rigid motion about the volume center c: q' - c = R (q - c) + t.

    ``translation`` is in mm. ``interp`` selects the resampling spline used when the
    pose is applied; the boundary is always zero-filled.
    """
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    interp: str = "trilinear"

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=np.float64)
        translation = np.array(self.translation, dtype=np.float64).reshape(-1)
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise PoseError(f"Expected 3x3 rotation and 3-vector translation, got {rotation.shape} and {translation.shape}")
        if not np.all(np.isfinite(rotation)) or not np.all(np.isfinite(translation)):
            raise PoseError("Pose parameters must be finite")
        if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > _ORTHONORMAL_TOL:
            raise PoseError("rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > _ORTHONORMAL_TOL:
            raise PoseError("rotation is not proper (determinant must be +1)")
        if self.interp not in INTERP_ORDERS:
            raise PoseError(f"interp must be one of {tuple(INTERP_ORDERS)}, got {self.interp!r}")
        rotation.flags.writeable = False
        translation.flags.writeable = False
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls, interp: str = "trilinear") -> "RigidPose":
        return cls(interp=interp)

    @classmethod
    def from_euler(
        cls,
        z_deg: float = 0.0,
        x_deg: float = 0.0,
        translation: Optional[Sequence[float]] = None,
        interp: str = "trilinear",
    ) -> "RigidPose":
        """
        Build a pose that rotates about z (in the xy plane) first, then about x.

        Args:
            z_deg: First rotation, about the z-axis, in degrees
            x_deg: Second rotation, about the x-axis, in degrees
            translation: Translation in mm applied after the rotation
            interp: Interpolation mode

        Returns:
            RigidPose: The composite pose
        """
        rotation = rotation_matrix("x", x_deg) @ rotation_matrix("z", z_deg)
        translation = np.zeros(3) if translation is None else translation
        return cls(rotation=rotation, translation=translation, interp=interp)

    @property
    def is_identity(self) -> bool:
        """True only for the exact identity, which skips resampling entirely."""
        return bool(np.array_equal(self.rotation, np.eye(3)) and not np.any(self.translation))

    def with_interp(self, interp: str) -> "RigidPose":
        return RigidPose(self.rotation, self.translation, interp)

    def __repr__(self) -> str:
        return (f"RigidPose(rotation={self.rotation.round(6).tolist()}, "
                f"translation={self.translation.round(6).tolist()}, interp={self.interp!r})")


def inverse_pose(p: RigidPose) -> RigidPose:
    """Analytic inverse motion (R^T, -R^T t), keeping the interpolation mode."""
    return RigidPose(p.rotation.T, -p.rotation.T @ p.translation, p.interp)


def compose_poses(p1: RigidPose, p2: RigidPose) -> RigidPose:
    """
    Single pose equal to applying ``p1`` then ``p2``.

    The composite is resampled once when applied. The interpolation mode of ``p2``
    is kept.
    """
    return RigidPose(p2.rotation @ p1.rotation, p2.rotation @ p1.translation + p2.translation, p2.interp)


def apply_pose(v: Volume, p: RigidPose) -> Volume:
    """
    Resample ``v`` under pose ``p`` on the same grid (pull-back, zero boundary).

    The output voxel at world point q takes the interpolated value of ``v`` at
    p^{-1}(q). The identity pose returns ``v`` unchanged.

    Args:
        v: Input volume
        p: Pose to apply

    Returns:
        Volume: The transformed volume
    """
    if p.is_identity:
        return v

    h = v.voxel_size
    center = v.center()
    origin = np.asarray(v.origin)
    r_inv = p.rotation.T

    # index_in = R^T index_out + offset, in (x, y, z) index order
    offset_xyz = (r_inv @ (origin - center - p.translation) + center - origin) / h

    # data arrays are indexed (z, y, x)
    matrix_zyx = r_inv[::-1, ::-1]
    offset_zyx = offset_xyz[::-1]

    out = ndimage.affine_transform(
        v.data,
        matrix_zyx,
        offset=offset_zyx,
        output_shape=v.data.shape,
        order=INTERP_ORDERS[p.interp],
        mode="grid-constant",
        cval=0.0,
        prefilter=True,
    )
    return v.with_data(out)


def roundtrip_error(v: Volume, p: RigidPose, margin: int = 3) -> float:
    """
    Relative interior error of apply(inverse(p), apply(p, v)) against ``v``.

    Args:
        v: Reference volume
        p: Pose under test
        margin: Voxels excluded at every face of the grid

    Returns:
        float: ||roundtrip - v|| / ||v|| over the interior region
    """
    restored = apply_pose(apply_pose(v, p), inverse_pose(p))
    interior = tuple(slice(margin, n - margin) for n in v.data.shape)
    ref = v.data[interior]
    ref_norm = np.linalg.norm(ref)
    if ref_norm == 0:
        return 0.0 if norm(restored) == 0 else float("inf")
    return float(np.linalg.norm(restored.data[interior] - ref) / ref_norm)
