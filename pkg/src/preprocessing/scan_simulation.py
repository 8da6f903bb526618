"""Simulate posed scans: y_k = A T_k x + w with seeded Gaussian noise."""
import logging
from typing import Optional

import numpy as np

from ..core import Volume
from ..forward_model import RigidPose, ScanGeometry, Sinogram, apply_pose, forward_project

logger = logging.getLogger(__name__)

# Floor on the noise variance used for the statistical weights of noiseless scans
MIN_VARIANCE = 1e-8


def noise_variance(clean: Sinogram, snr_db: float) -> float:
    """Per-sample variance alpha giving the requested sinogram SNR: mean(y^2) * 10^(-snr/10)."""
    return float(np.mean(clean.data ** 2) * 10.0 ** (-snr_db / 10.0))


def simulate_pose_scan(
    phantom: Volume,
    pose: RigidPose,
    g: ScanGeometry,
    alpha: Optional[float] = 0.0,
    seed: Optional[int] = None,
    snr_db: Optional[float] = None,
) -> Sinogram:
    """
    Simulate the sinogram of ``phantom`` placed in ``pose``.

    The posed object is resampled with the pose's own interpolation mode (the
    identity pose is not resampled), projected, and corrupted with i.i.d. Gaussian
    noise of variance alpha. Weights are set uniformly to 1 / max(alpha, MIN_VARIANCE).

    Args:
        phantom: Ground truth in reconstruction coordinates
        pose: Pose of the object during this scan
        g: Scan geometry
        alpha: Noise variance per sample; None derives it from ``snr_db``
        seed: Seed for the noise generator
        snr_db: Target SNR in dB, used only when ``alpha`` is None

    Returns:
        Sinogram: Noisy measurements with their statistical weights
    """
    if alpha is not None and alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")

    posed = apply_pose(phantom, pose)
    clean = forward_project(posed, g)

    if alpha is None:
        alpha = noise_variance(clean, snr_db) if snr_db is not None else 0.0

    if alpha == 0:
        logger.info(f"Simulated noiseless scan, pose {pose!r}")
        return clean.with_weights(1.0 / MIN_VARIANCE)

    rng = np.random.default_rng(seed)
    noisy = clean.data + rng.normal(0.0, np.sqrt(alpha), size=clean.data.shape)
    logger.info(f"Simulated scan with noise variance {alpha:.3e} (seed {seed})")
    return Sinogram(g, noisy, np.full(g.shape, 1.0 / max(alpha, MIN_VARIANCE)))
