"""Scan geometry and sinogram types, plus the MPFS sinogram file format."""
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..core.volume_io import float32_payload
from ..errors import GeometryError, ShapeMismatchError, VolumeFormatError

logger = logging.getLogger(__name__)

PARALLEL3D = "parallel3d"
CONEBEAM = "conebeam"
GEOMETRY_MODES = (PARALLEL3D, CONEBEAM)


@dataclass(frozen=True)
class ScanGeometry:
    """
    Source/detector layout of one scan.

    The rotation axis is the world z-axis through the origin. At view angle theta the
    rays travel along (-sin theta, cos theta, 0); detector channels run along
    (cos theta, sin theta, 0) and detector rows along +z, both centered on the axis.
    For cone-beam the source sits at distance ``source_to_iso`` behind the axis and
    the detector plane at ``source_to_det`` from the source.
    """
    mode: str
    view_angles: Tuple[float, ...]
    det_rows: int
    det_channels: int
    det_pixel_size: float = 1.0
    source_to_iso: float = 0.0
    source_to_det: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "view_angles", tuple(float(a) for a in self.view_angles))
        if self.mode not in GEOMETRY_MODES:
            raise GeometryError(f"mode must be one of {GEOMETRY_MODES}, got {self.mode!r}")
        if len(self.view_angles) < 1:
            raise GeometryError("num_views must be at least 1")
        if not all(np.isfinite(self.view_angles)):
            raise GeometryError("view angles must be finite")
        if self.det_rows < 1 or self.det_channels < 1:
            raise GeometryError(f"detector must have at least one pixel, got {self.det_rows}x{self.det_channels}")
        if not self.det_pixel_size > 0:
            raise GeometryError(f"det_pixel_size must be positive, got {self.det_pixel_size}")
        if self.mode == CONEBEAM and not 0 < self.source_to_iso < self.source_to_det:
            raise GeometryError(
                "conebeam requires 0 < source_to_iso < source_to_det, "
                f"got {self.source_to_iso} and {self.source_to_det}"
            )

    @property
    def num_views(self) -> int:
        return len(self.view_angles)

    @property
    def shape(self) -> Tuple[int, int, int]:
        """Sinogram array shape (num_views, det_rows, det_channels)."""
        return (self.num_views, self.det_rows, self.det_channels)

    @property
    def num_samples(self) -> int:
        return self.num_views * self.det_rows * self.det_channels


def uniform_view_angles(num_views: int, angular_range_deg: float = 360.0) -> Tuple[float, ...]:
    """Evenly spaced view angles in radians over ``angular_range_deg``, endpoint excluded."""
    return tuple(np.deg2rad(np.arange(num_views) * angular_range_deg / num_views))


@dataclass(frozen=True, eq=False)
class Sinogram:
    """Projection measurements of one pose with their statistical weights (diagonal of Lambda)."""
    geometry: ScanGeometry
    data: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.shape != self.geometry.shape:
            raise ShapeMismatchError(f"Sinogram data shape {data.shape} does not match geometry {self.geometry.shape}")
        weights = np.ones_like(data) if self.weights is None else np.array(self.weights, dtype=np.float64, copy=True)
        if weights.shape != data.shape:
            raise ShapeMismatchError(f"Sinogram weights shape {weights.shape} does not match data {data.shape}")
        if not (np.all(np.isfinite(data)) and np.all(np.isfinite(weights))):
            raise ValueError("Sinogram data and weights must be finite")
        if np.any(weights < 0):
            raise ValueError("Sinogram weights must be nonnegative")
        data.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "weights", weights)

    def with_data(self, data: np.ndarray) -> "Sinogram":
        return Sinogram(self.geometry, data, self.weights)

    def with_weights(self, weights: Union[float, np.ndarray]) -> "Sinogram":
        return Sinogram(self.geometry, self.data, np.broadcast_to(weights, self.data.shape))


def transmission_weights(sinogram: Sinogram, photons: float) -> np.ndarray:
    """
    Counts-based statistical weights lambda = photons * exp(-y).

    Args:
        sinogram: Line-integral measurements
        photons: Unattenuated photon count per detector pixel

    Returns:
        np.ndarray: Weights with the sinogram's shape
    """
    return photons * np.exp(-sinogram.data)


# MPFS sinogram format

SINOGRAM_MAGIC = b"MPFS"
SINOGRAM_FORMAT_VERSION = 1

SINOGRAM_HEADER = np.dtype([
    ("magic", "S4"),
    ("version", "<u4"),
    ("mode", "<u4"),
    ("num_views", "<u4"),
    ("det_rows", "<u4"),
    ("det_channels", "<u4"),
    ("det_pixel_size", "<f8"),
    ("source_to_iso", "<f8"),
    ("source_to_det", "<f8"),
])


def write_sinogram(path: Union[str, os.PathLike], s: Sinogram) -> Path:
    """
    Write a sinogram in MPFS format: header, view angles (f64), data then weights (f32).

    Args:
        path: Destination file
        s: Sinogram to write

    Returns:
        Path: The written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    g = s.geometry

    header = np.zeros((), dtype=SINOGRAM_HEADER)
    header["magic"] = SINOGRAM_MAGIC
    header["version"] = SINOGRAM_FORMAT_VERSION
    header["mode"] = GEOMETRY_MODES.index(g.mode)
    header["num_views"] = g.num_views
    header["det_rows"] = g.det_rows
    header["det_channels"] = g.det_channels
    header["det_pixel_size"] = g.det_pixel_size
    header["source_to_iso"] = g.source_to_iso
    header["source_to_det"] = g.source_to_det

    data, weights = float32_payload(s.data, "data"), float32_payload(s.weights, "weights")
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.asarray(g.view_angles, dtype="<f8").tobytes())
        f.write(data.tobytes())
        f.write(weights.tobytes())

    logger.debug(f"Wrote sinogram {g.shape} to {path}")
    return path


def read_sinogram(path: Union[str, os.PathLike]) -> Sinogram:
    """
    Read an MPFS sinogram.

    Raises:
        VolumeFormatError: Naming the offending field on any decode problem
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Sinogram file not found: {path}")

    raw = path.read_bytes()
    if len(raw) < SINOGRAM_HEADER.itemsize:
        raise VolumeFormatError("header", f"file holds {len(raw)} bytes, header needs {SINOGRAM_HEADER.itemsize}")

    header = np.frombuffer(raw, dtype=SINOGRAM_HEADER, count=1)[0]
    if header["magic"] != SINOGRAM_MAGIC:
        raise VolumeFormatError("magic", f"expected {SINOGRAM_MAGIC!r}, found {bytes(header['magic'])!r}")
    if header["version"] != SINOGRAM_FORMAT_VERSION:
        raise VolumeFormatError(
            "version", f"unsupported version {int(header['version'])}, expected {SINOGRAM_FORMAT_VERSION}"
        )
    if int(header["mode"]) >= len(GEOMETRY_MODES):
        raise VolumeFormatError("mode", f"unknown geometry mode code {int(header['mode'])}")

    num_views = int(header["num_views"])
    rows, channels = int(header["det_rows"]), int(header["det_channels"])
    n_samples = num_views * rows * channels

    offset = SINOGRAM_HEADER.itemsize
    angles_end = offset + 8 * num_views
    expected = angles_end + 2 * 4 * n_samples
    if len(raw) != expected:
        raise VolumeFormatError("payload", f"expected {expected} bytes for {num_views} views, found {len(raw)}")

    angles = np.frombuffer(raw[offset:angles_end], dtype="<f8")
    values = np.frombuffer(raw[angles_end:], dtype="<f4").astype(np.float64)

    try:
        geometry = ScanGeometry(
            mode=GEOMETRY_MODES[int(header["mode"])],
            view_angles=tuple(angles),
            det_rows=rows,
            det_channels=channels,
            det_pixel_size=float(header["det_pixel_size"]),
            source_to_iso=float(header["source_to_iso"]),
            source_to_det=float(header["source_to_det"]),
        )
    except GeometryError as e:
        raise VolumeFormatError("geometry", str(e)) from e

    shape = geometry.shape
    try:
        return Sinogram(geometry, values[:n_samples].reshape(shape), values[n_samples:].reshape(shape))
    except ValueError as e:
        raise VolumeFormatError("payload", str(e)) from e
