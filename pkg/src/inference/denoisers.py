"""Classical slice-wise denoisers used as MACE prior agents."""
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from ..core import Volume

logger = logging.getLogger(__name__)

DENOISER_METHODS = ("tv2d", "gaussian2d", "tv3d", "identity")

# Axes of the (z, y, x) data array spanned by each slice family.
PLANE_AXES = {
    "xy": (1, 2),
    "xz": (0, 2),
    "yz": (0, 1),
    "xyz": (0, 1, 2),
}


@dataclass(frozen=True)
class DenoiserConfig:
    """
    Settings of one prior agent.

    ``strength`` is the TV regularization weight for tv2d/tv3d and the Gaussian
    standard deviation in voxels for gaussian2d.
    """
    method: str = "tv2d"
    strength: float = 0.0
    plane: str = "xy"
    n_iters: int = 40

    def __post_init__(self):
        if self.method not in DENOISER_METHODS:
            raise ValueError(f"method must be one of {DENOISER_METHODS}, got {self.method!r}")
        if self.plane not in PLANE_AXES:
            raise ValueError(f"plane must be one of {tuple(PLANE_AXES)}, got {self.plane!r}")
        if not self.strength >= 0:
            raise ValueError(f"strength must be nonnegative, got {self.strength}")
        if self.method == "tv3d" and self.plane != "xyz":
            raise ValueError("tv3d denoises whole volumes; use plane 'xyz'")
        if self.n_iters < 1:
            raise ValueError(f"n_iters must be at least 1, got {self.n_iters}")


def _along(axis: int, ndim: int, start: int, stop: int) -> Tuple[slice, ...]:
    """Index selecting ``start:stop`` along ``axis`` and everything elsewhere."""
    return tuple(slice(start, stop) if a == axis else slice(None) for a in range(ndim))


def _gradient(u: np.ndarray, axes: Sequence[int]) -> List[np.ndarray]:
    """Forward differences along ``axes`` with a zero last difference."""
    grads = []
    for axis in axes:
        g = np.zeros_like(u)
        dst = [slice(None)] * u.ndim
        dst[axis] = slice(0, -1)
        g[tuple(dst)] = np.diff(u, axis=axis)
        grads.append(g)
    return grads


def _divergence(p: Sequence[np.ndarray], axes: Sequence[int]) -> np.ndarray:
    """Negative adjoint of ``_gradient``."""
    div = np.zeros_like(p[0])
    for comp, axis in zip(p, axes):
        n = comp.shape[axis]
        if n == 1:
            continue
        first, last = _along(axis, comp.ndim, 0, 1), _along(axis, comp.ndim, n - 1, n)
        div[first] += comp[first]
        div[_along(axis, comp.ndim, 1, n - 1)] += (
            comp[_along(axis, comp.ndim, 1, n - 1)] - comp[_along(axis, comp.ndim, 0, n - 2)]
        )
        div[last] -= comp[_along(axis, comp.ndim, n - 2, n - 1)]
    return div


def _rof_objective(u: np.ndarray, s: np.ndarray, weight: float, axes: Sequence[int]) -> np.ndarray:
    """Per-slice ROF objective 0.5*||u - s||^2 + weight*TV(u), reduced over ``axes``."""
    grads = _gradient(u, axes)
    tv = np.sqrt(sum(g * g for g in grads))
    return np.sum(0.5 * (u - s) ** 2 + weight * tv, axis=tuple(axes), keepdims=True)


@dataclass
class TVTrace:
    """
    Summed ROF objective per iteration of ``tv_denoise``.

    ``raw`` holds the objective of the Chambolle primal iterate itself, which may rise
    between iterations. ``best`` holds the objective of the per-slice best iterate
    kept so far, which is what ``tv_denoise`` returns. Index 0 is the input image.
    """
    raw: List[float] = field(default_factory=list)
    best: List[float] = field(default_factory=list)


def tv_denoise(
    image: np.ndarray,
    weight: float,
    axes: Sequence[int] = (0, 1),
    n_iters: int = 40,
    return_trace: bool = False,
) -> Union[np.ndarray, Tuple[np.ndarray, TVTrace]]:
    """
    Isotropic TV proximal map argmin_u 0.5*||u - s||^2 + weight*TV(u).

    Uses Chambolle's dual projection iteration for a fixed number of steps,
    independently for every slice spanned by ``axes``. The primal iterate is not
    monotone in the objective, so each slice returns the best iterate it has seen.

    Args:
        image: Input array; slices are taken over ``axes``
        weight: TV regularization weight
        axes: Axes spanning one slice (two for 2D TV, three for 3D TV)
        n_iters: Number of dual iterations
        return_trace: Also return the raw and best objective per iteration

    Returns:
        Denoised array, optionally with its TVTrace
    """
    s = np.asarray(image, dtype=np.float64)
    axes = tuple(axes)
    if weight == 0:
        return (s.copy(), TVTrace()) if return_trace else s.copy()

    tau = 1.0 / (4.0 * len(axes))
    p = [np.zeros_like(s) for _ in axes]
    best = s.copy()
    best_obj = _rof_objective(best, s, weight, axes)
    trace = TVTrace(raw=[float(best_obj.sum())], best=[float(best_obj.sum())])

    for _ in range(n_iters):
        grads = _gradient(_divergence(p, axes) - s / weight, axes)
        magnitude = np.sqrt(sum(g * g for g in grads))
        denom = 1.0 + tau * magnitude
        p = [(pc + tau * g) / denom for pc, g in zip(p, grads)]

        u = s - weight * _divergence(p, axes)
        obj = _rof_objective(u, s, weight, axes)
        improved = obj < best_obj
        best = np.where(improved, u, best)
        best_obj = np.where(improved, obj, best_obj)
        trace.raw.append(float(obj.sum()))
        trace.best.append(float(best_obj.sum()))

    return (best, trace) if return_trace else best


def gaussian_denoise(image: np.ndarray, std: float, axes: Sequence[int] = (0, 1)) -> np.ndarray:
    """Truncated, normalized Gaussian smoothing over ``axes`` with zero boundary."""
    s = np.asarray(image, dtype=np.float64)
    if std == 0:
        return s.copy()
    sigma = [std if axis in axes else 0.0 for axis in range(s.ndim)]
    return ndimage.gaussian_filter(s, sigma=sigma, mode="constant", cval=0.0, truncate=3.0)


def denoise_slicewise(v: Volume, cfg: DenoiserConfig) -> Volume:
    """
    Denoise every 2D slice of ``v`` along ``cfg.plane`` independently.

    Args:
        v: Volume to denoise
        cfg: Denoiser settings

    Returns:
        Volume: Denoised volume on the same grid
    """
    if cfg.method == "identity" or cfg.strength == 0:
        return v

    axes = PLANE_AXES[cfg.plane]
    if cfg.method in ("tv2d", "tv3d"):
        out = tv_denoise(v.data, cfg.strength, axes=axes, n_iters=cfg.n_iters)
    else:
        out = gaussian_denoise(v.data, cfg.strength, axes=axes)
    return v.with_data(out)
