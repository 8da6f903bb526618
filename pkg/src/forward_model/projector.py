"""Ray-driven (Siddon) forward projector and its matched back projector.

Every detector pixel center defines one ray. The exact intersection lengths of all
rays with the voxel grid are assembled once into a sparse system matrix A, so the
back projection is the exact transpose of the forward projection.
"""
import logging
from functools import lru_cache
from typing import Callable, Tuple, Union

import numpy as np
import scipy.sparse as sp

from ..core import GridSpec, Volume
from ..errors import ShapeMismatchError
from .geometry import CONEBEAM, ScanGeometry, Sinogram

logger = logging.getLogger(__name__)

# Segments shorter than this fraction of a voxel edge are round-off artifacts.
_MIN_SEGMENT = 1e-9


def _detector_frame(theta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Channel axis and ray direction at view angle ``theta``."""
    e_u = np.array([np.cos(theta), np.sin(theta), 0.0])
    direction = np.array([-np.sin(theta), np.cos(theta), 0.0])
    return e_u, direction


def _ray_endpoints(grid: GridSpec, geometry: ScanGeometry, theta: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Start and end points of every ray of one view, channel fastest.

    Returns:
        Tuple of (rows*channels, 3) arrays holding ray starts and ends in world mm
    """
    p = geometry.det_pixel_size
    u = (np.arange(geometry.det_channels) - 0.5 * (geometry.det_channels - 1)) * p
    v = (np.arange(geometry.det_rows) - 0.5 * (geometry.det_rows - 1)) * p
    vv, uu = np.meshgrid(v, u, indexing="ij")
    uu, vv = uu.reshape(-1, 1), vv.reshape(-1, 1)

    e_u, direction = _detector_frame(theta)
    e_v = np.array([0.0, 0.0, 1.0])

    if geometry.mode == CONEBEAM:
        source = -geometry.source_to_iso * direction
        det_center = (geometry.source_to_det - geometry.source_to_iso) * direction
        ends = det_center + uu * e_u + vv * e_v
        starts = np.broadcast_to(source, ends.shape)
        return np.ascontiguousarray(starts), ends

    # parallel3d: lines long enough to cross the whole grid
    half_extent = 0.5 * np.asarray(grid.dims) * grid.voxel_size
    reach = np.linalg.norm(np.abs(grid.center()) + half_extent) + grid.voxel_size
    points = uu * e_u + vv * e_v
    return points - reach * direction, points + reach * direction


def _trace_rays(grid: GridSpec, starts: np.ndarray, ends: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Exact ray/voxel intersection lengths for a batch of ray segments.

    Args:
        grid: Voxel grid
        starts: (R, 3) segment starts
        ends: (R, 3) segment ends

    Returns:
        Tuple of (ray index, flat voxel index, intersection length in mm) arrays
    """
    h = grid.voxel_size
    dims = np.asarray(grid.dims)
    lower = np.asarray(grid.origin) - 0.5 * h
    upper = lower + dims * h

    delta = ends - starts
    seg_len = np.linalg.norm(delta, axis=1)
    n_rays = starts.shape[0]

    plane_alphas = []
    alpha_min = np.zeros(n_rays)
    alpha_max = np.ones(n_rays)
    for axis in range(3):
        planes = lower[axis] + h * np.arange(dims[axis] + 1)
        along = delta[:, axis] != 0
        with np.errstate(divide="ignore", invalid="ignore"):
            alphas = (planes[None, :] - starts[:, axis, None]) / delta[:, axis, None]
        alphas[~along] = np.nan
        plane_alphas.append(alphas)

        enter = np.where(along, np.minimum(alphas[:, 0], alphas[:, -1]), -np.inf)
        leave = np.where(along, np.maximum(alphas[:, 0], alphas[:, -1]), np.inf)
        # rays parallel to this axis hit the grid only if they lie within its slab
        outside = ~along & ((starts[:, axis] < lower[axis]) | (starts[:, axis] >= upper[axis]))
        enter[outside] = np.inf
        alpha_min = np.maximum(alpha_min, enter)
        alpha_max = np.minimum(alpha_max, leave)

    hit = alpha_max > alpha_min
    alphas = np.concatenate(plane_alphas + [alpha_min[:, None], alpha_max[:, None]], axis=1)
    with np.errstate(invalid="ignore"):
        alphas[(alphas < alpha_min[:, None]) | (alphas > alpha_max[:, None]) | ~hit[:, None]] = np.nan
    alphas.sort(axis=1)

    steps = np.diff(alphas, axis=1)
    mids = alphas[:, :-1] + 0.5 * steps
    with np.errstate(invalid="ignore"):
        keep = steps * seg_len[:, None] > _MIN_SEGMENT * h

    ray_idx, seg_idx = np.nonzero(keep)
    mid = mids[ray_idx, seg_idx]
    points = starts[ray_idx] + mid[:, None] * delta[ray_idx]
    voxel = np.floor((points - lower) / h).astype(np.int64)
    inside = np.all((voxel >= 0) & (voxel < dims), axis=1)

    ray_idx, seg_idx, voxel = ray_idx[inside], seg_idx[inside], voxel[inside]
    flat = (voxel[:, 2] * dims[1] + voxel[:, 1]) * dims[0] + voxel[:, 0]
    lengths = steps[ray_idx, seg_idx] * seg_len[ray_idx]
    return ray_idx, flat, lengths


@lru_cache(maxsize=16)
def system_matrix(grid: GridSpec, geometry: ScanGeometry) -> sp.csr_matrix:
    """
    Assemble the sparse system matrix A (samples x voxels) for a grid and geometry.

    Rows follow the sinogram layout (view, row, channel); columns the x-fastest voxel
    layout. Results are cached per (grid, geometry).

    Args:
        grid: Voxel grid
        geometry: Scan geometry

    Returns:
        scipy.sparse.csr_matrix: Intersection lengths in mm
    """
    logger.info(f"Assembling {geometry.mode} system matrix: {geometry.num_views} views, "
                f"{geometry.det_rows}x{geometry.det_channels} detector, grid {grid.dims}")
    rays_per_view = geometry.det_rows * geometry.det_channels
    rows, cols, vals = [], [], []
    for view, theta in enumerate(geometry.view_angles):
        starts, ends = _ray_endpoints(grid, geometry, theta)
        ray_idx, flat, lengths = _trace_rays(grid, starts, ends)
        rows.append(ray_idx + view * rays_per_view)
        cols.append(flat)
        vals.append(lengths)

    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(geometry.num_samples, grid.num_voxels),
    )
    matrix.sum_duplicates()
    logger.info(f"System matrix ready: {matrix.nnz} nonzeros")
    return matrix


def _grid_of(template: Union[Volume, GridSpec]) -> GridSpec:
    return template.grid if isinstance(template, Volume) else template


def forward_project(v: Volume, g: ScanGeometry) -> Sinogram:
    """
    Line integrals of ``v`` along every ray of ``g``; weights are initialized to 1.

    Args:
        v: Attenuation volume (1/mm)
        g: Scan geometry

    Returns:
        Sinogram: Dimensionless line integrals, zero for rays missing the grid
    """
    data = system_matrix(v.grid, g) @ v.ravel()
    return Sinogram(g, data.reshape(g.shape))


def back_project(s: Sinogram, template: Union[Volume, GridSpec]) -> Volume:
    """
    Exact adjoint of ``forward_project`` onto the template's grid.

    Args:
        s: Sinogram to back project (weights are ignored)
        template: Volume or grid defining dims, voxel size and origin

    Returns:
        Volume: A^T s
    """
    grid = _grid_of(template)
    data = system_matrix(grid, s.geometry).T @ s.data.reshape(-1)
    return Volume(data.reshape(grid.shape), grid.voxel_size, grid.origin)


def apply_normal_operator(v: Volume, s_weights: np.ndarray, g: ScanGeometry, sigma: float) -> Volume:
    """
    Apply A^T Lambda A + I / sigma^2 to ``v``.

    Args:
        v: Input volume
        s_weights: Diagonal of Lambda, sinogram shaped
        g: Scan geometry defining A
        sigma: Proximal strength, > 0

    Returns:
        Volume: The normal operator applied to v, on v's grid
    """
    normal_op = make_normal_operator(v.grid, g, s_weights, sigma)
    return v.with_data(normal_op(v.ravel()).reshape(v.data.shape))


def make_normal_operator(
    grid: GridSpec, g: ScanGeometry, s_weights: np.ndarray, sigma: float
) -> Callable[[np.ndarray], np.ndarray]:
    """
    Flat-array form of A^T Lambda A + I / sigma^2, as used by iterative solvers.

    Args:
        grid: Reconstruction grid
        g: Scan geometry defining A
        s_weights: Diagonal of Lambda, sinogram shaped
        sigma: Proximal strength, > 0

    Returns:
        Callable mapping a flat volume to a flat volume
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    weights = np.asarray(s_weights, dtype=np.float64)
    if weights.shape != g.shape:
        raise ShapeMismatchError(f"weights shape {weights.shape} does not match geometry {g.shape}")
    matrix = system_matrix(grid, g)
    flat_weights = weights.reshape(-1)
    inv_var = 1.0 / sigma ** 2

    def normal_op(x: np.ndarray) -> np.ndarray:
        return matrix.T @ (flat_weights * (matrix @ x)) + inv_var * x

    return normal_op


def normal_diagonal(template: Union[Volume, GridSpec], g: ScanGeometry, weights: np.ndarray) -> Volume:
    """Diagonal of A^T Lambda A as a volume."""
    grid = _grid_of(template)
    matrix = system_matrix(grid, g)
    diag = matrix.multiply(matrix).T @ np.asarray(weights, dtype=np.float64).reshape(-1)
    return Volume(np.asarray(diag).reshape(grid.shape), grid.voxel_size, grid.origin)
