"""Preprocessing: phantom generation and posed scan simulation."""

from .phantom import generate_phantom
from .scan_simulation import MIN_VARIANCE, noise_variance, simulate_pose_scan

__all__ = ['generate_phantom', 'MIN_VARIANCE', 'noise_variance', 'simulate_pose_scan']
