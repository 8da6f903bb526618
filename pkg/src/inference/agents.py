"""MACE agents: proximal data-fit maps, conjugate proximal maps and denoiser priors."""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

from ..core import Volume
from ..forward_model import (
    RigidPose,
    ScanGeometry,
    Sinogram,
    apply_pose,
    inverse_pose,
    make_normal_operator,
    system_matrix,
)
from .conjugate_gradient import CGResult, conjugate_gradient
from .denoisers import DenoiserConfig, denoise_slicewise

logger = logging.getLogger(__name__)

DATA_ROLE = "data"
PRIOR_ROLE = "prior"


@dataclass(frozen=True, eq=False)
class ProxConfig:
    """Measurements and solver settings of a data-fit proximal map."""
    sinogram: Sinogram
    sigma: float
    cg_tol: float = 1e-6
    cg_max_iters: int = 50

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.cg_tol < 1:
            raise ValueError(f"cg_tol must lie in (0, 1), got {self.cg_tol}")
        if self.cg_max_iters < 1:
            raise ValueError(f"cg_max_iters must be at least 1, got {self.cg_max_iters}")

    @property
    def geometry(self) -> ScanGeometry:
        return self.sinogram.geometry


def solve_prox(v: Volume, cfg: ProxConfig) -> Tuple[Volume, CGResult]:
    """
    Data-fit proximal map with its CG trace.

    Solves (A^T Lambda A + I/sigma^2) x = A^T Lambda y + v/sigma^2 by conjugate
    gradient warm-started at ``v``.

    Args:
        v: Proximal input on the reconstruction grid
        cfg: Measurements and solver settings

    Returns:
        Tuple of the minimizer and the CG result
    """
    matrix = system_matrix(v.grid, cfg.geometry)
    weights = cfg.sinogram.weights
    normal_op = make_normal_operator(v.grid, cfg.geometry, weights, cfg.sigma)

    x0 = v.ravel()
    rhs = matrix.T @ (weights.reshape(-1) * cfg.sinogram.data.reshape(-1)) + (1.0 / cfg.sigma ** 2) * x0
    result = conjugate_gradient(normal_op, rhs, x0, tol=cfg.cg_tol, max_iters=cfg.cg_max_iters)
    return v.with_data(result.x.reshape(v.data.shape)), result


def prox_data(v: Volume, cfg: ProxConfig) -> Volume:
    """argmin_x 0.5*||y - Ax||^2_Lambda + ||x - v||^2 / (2 sigma^2)."""
    x, _ = solve_prox(v, cfg)
    return x


def conjugate_prox_data(v: Volume, cfg: ProxConfig, pose: RigidPose) -> Volume:
    """
    Conjugate proximal map T^{-1} prox(T v; y) for data measured in a posed frame.

    The identity pose skips both resamplings, so the result equals ``prox_data``.

    Args:
        v: Input in reconstruction coordinates
        cfg: Posed measurements and solver settings
        pose: Pose T mapping reconstruction coordinates to the posed frame

    Returns:
        Volume: Output in reconstruction coordinates
    """
    posed = apply_pose(v, pose)
    return apply_pose(prox_data(posed, cfg), inverse_pose(pose))


class DataProxAgent:
    """Proximal map of the data term of one scan in reconstruction coordinates."""

    kind = "data_prox"
    role = DATA_ROLE

    def __init__(self, cfg: ProxConfig, label: str = "data"):
        self.cfg = cfg
        self.label = label

    def __call__(self, v: Volume) -> Volume:
        return prox_data(v, self.cfg)


class ConjugateDataProxAgent:
    """Data-fit agent for a scan acquired in pose ``pose``."""

    kind = "conjugate_data_prox"
    role = DATA_ROLE

    def __init__(self, cfg: ProxConfig, pose: RigidPose, label: str = "pose"):
        self.cfg = cfg
        self.pose = pose
        self.label = label

    def __call__(self, v: Volume) -> Volume:
        return conjugate_prox_data(v, self.cfg, self.pose)


class DenoiserAgent:
    """Prior agent applying a 2D denoiser to one slice family (or a 3D TV denoiser)."""

    role = PRIOR_ROLE

    def __init__(self, cfg: DenoiserConfig, label: Optional[str] = None):
        self.cfg = cfg
        self.kind = f"denoiser_{cfg.plane}"
        self.label = label or f"{cfg.method}_{cfg.plane}"

    def __call__(self, v: Volume) -> Volume:
        return denoise_slicewise(v, self.cfg)


def multislice_denoisers(method: str, strength: float, n_iters: int = 40) -> List[DenoiserAgent]:
    """The three multi-slice fusion priors, ordered xy, xz, yz."""
    return [
        DenoiserAgent(DenoiserConfig(method=method, strength=strength, plane=plane, n_iters=n_iters))
        for plane in ("xy", "xz", "yz")
    ]
