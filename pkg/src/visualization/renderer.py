"""Slice renders and convergence plots for reconstruction runs."""
import base64
import io
import logging
import os
from pathlib import Path
from typing import Optional, Tuple, Union

import cv2
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ..core import Volume
from ..errors import SliceIndexError
from ..inference import ConvergenceReport

logger = logging.getLogger(__name__)

# Array axis (of the (z, y, x) data) that a slice index runs along
SLICE_AXES = {"xy": 0, "xz": 1, "yz": 2}


def extract_slice(v: Volume, plane: str, index: Optional[int] = None) -> np.ndarray:
    """
    Take one 2D slice of ``v``, flipped so that +y (xy) or +z (xz, yz) points up.

    Args:
        v: Volume
        plane: "xy", "xz" or "yz"
        index: Slice index along the plane normal; None takes the central slice

    Returns:
        np.ndarray: The slice
    """
    if plane not in SLICE_AXES:
        raise ValueError(f"plane must be one of {tuple(SLICE_AXES)}, got {plane!r}")
    axis = SLICE_AXES[plane]
    n = v.data.shape[axis]
    if index is None:
        index = n // 2
    if not 0 <= index < n:
        raise SliceIndexError(f"{plane} slice index {index} outside [0, {n})")
    return np.flipud(np.take(v.data, index, axis=axis))


def window_to_uint8(image: np.ndarray, window: Tuple[float, float]) -> np.ndarray:
    """Map [lo, hi] linearly onto [0, 255], clamping values outside the window."""
    lo, hi = window
    if not hi > lo:
        raise ValueError(f"window must satisfy lo < hi, got {window}")
    scaled = np.clip((image - lo) / (hi - lo), 0.0, 1.0)
    return np.rint(scaled * 255.0).astype(np.uint8)


def render_slice(
    v: Volume,
    plane: str,
    index: Optional[int],
    window: Tuple[float, float],
    out_dir: Union[str, os.PathLike],
    label: str = "volume",
) -> Path:
    """
    Write one slice as an 8-bit grayscale PNG named ``{label}_{plane}_{index:03d}.png``.

    Args:
        v: Volume to render
        plane: "xy", "xz" or "yz"
        index: Slice index; None renders the central slice
        window: Display window (lo, hi) in 1/mm
        out_dir: Output directory
        label: Method or run label used in the filename

    Returns:
        Path: The written image
    """
    if index is None:
        index = v.data.shape[SLICE_AXES.get(plane, 0)] // 2
    image = window_to_uint8(extract_slice(v, plane, index), window)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{label}_{plane}_{index:03d}.png"
    if not cv2.imwrite(str(path), image):
        raise OSError(f"Could not write image {path}")
    logger.debug(f"Rendered {plane} slice {index} to {path}")
    return path


def plot_convergence(
    report: ConvergenceReport,
    output_path: Optional[Union[str, os.PathLike]] = None,
    title: str = "Mann iteration",
) -> Optional[str]:
    """
    Plot the relative update norm and agent disagreement per iteration (log scale).

    Returns a base64-encoded PNG if ``output_path`` is None.
    """
    frame = report.to_frame()
    fig, ax = plt.subplots(figsize=(8, 5))
    if not frame.empty:
        ax.semilogy(frame["iteration"], frame["residual"], marker="o", label="relative update")
        ax.semilogy(frame["iteration"], frame["disagreement"], marker="s", label="disagreement")
        ax.legend()
    ax.set_xlabel("Iteration")
    ax.set_ylabel("Relative norm")
    ax.set_title(f"{title} ({report.status})")
    ax.grid(True, which="both", alpha=0.3)
    plt.tight_layout()

    if output_path:
        plt.savefig(output_path, dpi=150)
        plt.close(fig)
        return None
    buf = io.BytesIO()
    plt.savefig(buf, format="png", dpi=150)
    plt.close(fig)
    buf.seek(0)
    return base64.b64encode(buf.read()).decode("utf-8")
