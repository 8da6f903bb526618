"""Reader and writer for the MPFV binary volume format.

Layout (little-endian): magic ``MPFV``, u32 version, u32 nx, ny, nz, f64 voxel_size,
f64 origin[3], then nx*ny*nz float32 values with x fastest.
"""
import logging
import os
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import VolumeFormatError
from .volume import Volume

logger = logging.getLogger(__name__)

VOLUME_MAGIC = b"MPFV"
VOLUME_FORMAT_VERSION = 1

VOLUME_HEADER = np.dtype([
    ("magic", "S4"),
    ("version", "<u4"),
    ("dims", "<u4", (3,)),
    ("voxel_size", "<f8"),
    ("origin", "<f8", (3,)),
])

PathLike = Union[str, os.PathLike]


def float32_payload(values: np.ndarray, field: str = "payload") -> np.ndarray:
    """
    Little-endian float32 copy of ``values`` for writing.

    Raises:
        VolumeFormatError: If a value is NaN, Inf or overflows float32
    """
    with np.errstate(over="ignore", invalid="ignore"):
        payload = np.ascontiguousarray(values, dtype="<f4")
    bad = ~np.isfinite(payload)
    if np.any(bad):
        first = float(np.asarray(values).reshape(-1)[np.flatnonzero(bad)[0]])
        raise VolumeFormatError(
            field, f"{int(bad.sum())} values are not finite in float32 (first {first!r}, "
                   f"limit {np.finfo(np.float32).max:.6e})"
        )
    return payload


def write_volume(path: PathLike, v: Volume) -> Path:
    """
    Write a volume to disk in MPFV format.

    Values are stored as float32; data that is float32-representable round-trips
    bit for bit, signed zeros and subnormals included.

    Args:
        path: Destination file
        v: Volume to write

    Returns:
        Path: The written file

    Raises:
        VolumeFormatError: If a value overflows float32; nothing is written
    """
    payload = float32_payload(v.data)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    header = np.zeros((), dtype=VOLUME_HEADER)
    header["magic"] = VOLUME_MAGIC
    header["version"] = VOLUME_FORMAT_VERSION
    header["dims"] = v.dims
    header["voxel_size"] = v.voxel_size
    header["origin"] = v.origin

    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(payload.tobytes())

    logger.debug(f"Wrote volume {v.dims} to {path}")
    return path


def read_volume(path: PathLike) -> Volume:
    """
    Read an MPFV volume.

    Args:
        path: File to read

    Returns:
        Volume: The decoded volume

    Raises:
        VolumeFormatError: On bad magic, unsupported version, bad dims or truncated payload
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Volume file not found: {path}")

    raw = path.read_bytes()
    if len(raw) < VOLUME_HEADER.itemsize:
        raise VolumeFormatError("header", f"file holds {len(raw)} bytes, header needs {VOLUME_HEADER.itemsize}")

    header = np.frombuffer(raw, dtype=VOLUME_HEADER, count=1)[0]
    if header["magic"] != VOLUME_MAGIC:
        raise VolumeFormatError("magic", f"expected {VOLUME_MAGIC!r}, found {bytes(header['magic'])!r}")
    if header["version"] != VOLUME_FORMAT_VERSION:
        raise VolumeFormatError(
            "version", f"unsupported version {int(header['version'])}, expected {VOLUME_FORMAT_VERSION}"
        )

    nx, ny, nz = (int(n) for n in header["dims"])
    if min(nx, ny, nz) < 1:
        raise VolumeFormatError("dims", f"dimensions must be positive, got {(nx, ny, nz)}")

    expected = nx * ny * nz
    payload = raw[VOLUME_HEADER.itemsize:]
    available = len(payload) // 4
    if available != expected or len(payload) % 4:
        raise VolumeFormatError(
            "payload", f"header declares {expected} voxels, payload holds {len(payload) / 4:g}"
        )

    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(nz, ny, nx)
    try:
        return Volume(data=data, voxel_size=float(header["voxel_size"]),
                      origin=tuple(float(o) for o in header["origin"]))
    except ValueError as e:
        raise VolumeFormatError("payload", str(e)) from e
