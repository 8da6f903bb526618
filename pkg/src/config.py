"""Experiment configuration: JSON documents validated with pydantic models."""
import json
import logging
import os
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ExperimentConfigError
from .forward_model import CONEBEAM, PARALLEL3D, RigidPose, ScanGeometry, uniform_view_angles
from .inference import DenoiserConfig, SolverConfig

logger = logging.getLogger(__name__)

Vec3 = Tuple[float, float, float]


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EllipsoidFeature(_Spec):
    """Additive ellipsoid; ``rotation_deg`` turns its axes about z."""
    type: Literal["ellipsoid"] = "ellipsoid"
    center: Vec3 = (0.0, 0.0, 0.0)
    semi_axes: Tuple[Annotated[float, Field(gt=0)], Annotated[float, Field(gt=0)], Annotated[float, Field(gt=0)]]
    value: float = Field(ge=0)
    rotation_deg: float = 0.0


class BallFeature(_Spec):
    """Additive ball."""
    type: Literal["ball"] = "ball"
    center: Vec3 = (0.0, 0.0, 0.0)
    radius: float = Field(gt=0)
    value: float = Field(ge=0)


class TriangleHole(_Spec):
    """Equilateral triangular hole, apex towards +y, centered relative to its plate."""
    offset: Tuple[float, float] = (0.0, 0.0)
    side: float = Field(gt=0)


class PlateFeature(_Spec):
    """Axis-aligned thin plate painted over the additive features, with holes."""
    type: Literal["plate"] = "plate"
    center: Vec3 = (0.0, 0.0, 0.0)
    size: Tuple[Annotated[float, Field(gt=0)], Annotated[float, Field(gt=0)], Annotated[float, Field(gt=0)]]
    value: float = Field(ge=0)
    holes: List[TriangleHole] = Field(default_factory=list)


Feature = Annotated[Union[EllipsoidFeature, BallFeature, PlateFeature], Field(discriminator="type")]


def default_features() -> List[Feature]:
    """Desk-scale test object for a 32 mm field: a body, inserts and a perforated plate."""
    return [
        EllipsoidFeature(center=(0.0, 0.0, 0.0), semi_axes=(13.0, 11.0, 13.0), value=0.02),
        EllipsoidFeature(center=(-4.0, 2.0, 3.0), semi_axes=(4.0, 3.0, 5.0), value=0.01, rotation_deg=30.0),
        EllipsoidFeature(center=(5.0, -3.0, -4.0), semi_axes=(3.0, 4.0, 3.0), value=0.005),
        BallFeature(center=(3.0, 5.0, -6.0), radius=2.5, value=0.015),
        PlateFeature(
            center=(0.0, 0.0, 7.0),
            size=(12.0, 8.0, 2.0),
            value=0.04,
            holes=[TriangleHole(offset=(-3.0, 0.0), side=3.5), TriangleHole(offset=(3.0, 0.0), side=3.5)],
        ),
    ]


class PhantomSpec(_Spec):
    """
    Analytic phantom on a grid centered on the rotation axis; ``dims`` is (nx, ny, nz).

    Each voxel averages ``supersample``^3 point samples (partial volume), then the
    grid is blurred with a Gaussian of std ``edge_blur`` mm so that resampling under
    a pose is not dominated by voxel-sharp edges. ``max_value`` bounds the summed
    feature values.
    """
    type: Literal["analytic"] = "analytic"
    dims: Tuple[Annotated[int, Field(ge=1)], Annotated[int, Field(ge=1)], Annotated[int, Field(ge=1)]] = (32, 32, 32)
    voxel_size: float = Field(default=1.0, gt=0)
    features: List[Feature] = Field(default_factory=default_features)
    supersample: int = Field(default=4, ge=1, le=8)
    edge_blur: float = Field(default=1.25, ge=0)
    max_value: float = Field(default=0.04, gt=0)


class PoseSpec(_Spec):
    """Rotation about z, then about x (degrees), then translation (mm)."""
    label: Optional[str] = None
    z_deg: float = 0.0
    x_deg: float = 0.0
    translation: Vec3 = (0.0, 0.0, 0.0)

    @property
    def is_identity(self) -> bool:
        return self.z_deg == 0 and self.x_deg == 0 and not any(self.translation)

    def to_pose(self, interp: str) -> RigidPose:
        if self.is_identity:
            return RigidPose.identity(interp)
        return RigidPose.from_euler(self.z_deg, self.x_deg, self.translation, interp)


class GeometrySpec(_Spec):
    mode: Literal["parallel3d", "conebeam"] = PARALLEL3D
    num_views: int = Field(default=35, ge=1)
    angular_range_deg: float = Field(default=360.0, gt=0)
    det_rows: int = Field(default=48, ge=1)
    det_channels: int = Field(default=48, ge=1)
    det_pixel_size: float = Field(default=1.0, gt=0)
    source_to_iso: float = Field(default=0.0, ge=0)
    source_to_det: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _check_cone(self):
        if self.mode == CONEBEAM and not 0 < self.source_to_iso < self.source_to_det:
            raise ValueError("conebeam requires 0 < source_to_iso < source_to_det")
        return self

    def to_geometry(self) -> ScanGeometry:
        return ScanGeometry(
            mode=self.mode,
            view_angles=uniform_view_angles(self.num_views, self.angular_range_deg),
            det_rows=self.det_rows,
            det_channels=self.det_channels,
            det_pixel_size=self.det_pixel_size,
            source_to_iso=self.source_to_iso,
            source_to_det=self.source_to_det,
        )


class NoiseSpec(_Spec):
    """Gaussian sinogram noise, given as a variance ``alpha`` or as ``snr_db``; alpha wins."""
    alpha: Optional[float] = Field(default=None, ge=0)
    snr_db: Optional[float] = 40.0
    seed: Optional[int] = Field(default=0, ge=0, lt=2 ** 64)

    @property
    def is_noiseless(self) -> bool:
        return self.alpha == 0 if self.alpha is not None else self.snr_db is None

    @model_validator(mode="after")
    def _check_seed(self):
        if not self.is_noiseless and self.seed is None:
            raise ValueError("seed is required when noise is enabled")
        return self


class DenoiserSpec(_Spec):
    """Priors: three-plane ``method`` for PnP/MPF, ``mbir_method`` for the single-pose MBIR baseline."""
    method: Literal["tv2d", "gaussian2d", "identity"] = "tv2d"
    strength: float = Field(default=1e-4, ge=0)
    n_iters: int = Field(default=40, ge=1)
    mbir_method: Literal["tv3d"] = "tv3d"
    mbir_strength: float = Field(default=1e-4, ge=0)

    def plane_config(self, plane: str) -> DenoiserConfig:
        return DenoiserConfig(method=self.method, strength=self.strength, plane=plane, n_iters=self.n_iters)

    def mbir_config(self) -> DenoiserConfig:
        return DenoiserConfig(method=self.mbir_method, strength=self.mbir_strength, plane="xyz", n_iters=self.n_iters)


class SolverSpec(_Spec):
    """Mann solver and data-agent settings; ``sigma`` None means automatic."""
    rho: float = Field(default=0.5, gt=0, lt=1)
    beta: float = Field(default=1.0, gt=0)
    max_iters: int = Field(default=50, ge=1)
    conv_tol: float = Field(default=1e-4, gt=0)
    sigma: Optional[float] = Field(default=None, gt=0)
    cg_tol: float = Field(default=1e-6, gt=0, lt=1)
    cg_max_iters: int = Field(default=50, ge=1)
    workers: int = Field(default=1, ge=1)
    record_history: bool = False
    init: Literal["zeros", "backprojection"] = "zeros"
    single_prior_pnp: bool = False
    interp: Literal["trilinear", "cubic_bspline", "quintic_bspline"] = "cubic_bspline"

    def to_solver_config(self) -> SolverConfig:
        return SolverConfig(
            rho=self.rho,
            beta=self.beta,
            max_iters=self.max_iters,
            conv_tol=self.conv_tol,
            record_history=self.record_history,
            workers=self.workers,
        )


class RenderSpec(_Spec):
    """Slice renders: window in 1/mm; ``index`` None renders the central slice."""
    window: Tuple[float, float] = (0.0, 0.04)
    planes: List[Literal["xy", "xz", "yz"]] = Field(default_factory=lambda: ["xy", "xz", "yz"])
    index: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check_window(self):
        if not self.window[0] < self.window[1]:
            raise ValueError("window must satisfy lo < hi")
        return self


class ExperimentConfig(_Spec):
    """Complete description of one multi-pose experiment."""
    phantom: PhantomSpec = Field(default_factory=PhantomSpec)
    poses: List[PoseSpec] = Field(
        min_length=1,
        default_factory=lambda: [PoseSpec(label="pose1"), PoseSpec(label="pose2", z_deg=45.0, x_deg=30.0)]
    )
    geometry: GeometrySpec = Field(default_factory=GeometrySpec)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    denoiser: DenoiserSpec = Field(default_factory=DenoiserSpec)
    render: RenderSpec = Field(default_factory=RenderSpec)
    simulation_interp: Literal["trilinear", "cubic_bspline", "quintic_bspline"] = "quintic_bspline"
    run_workers: int = Field(default=1, ge=1)
    output_dir: str = "output_mpf"

    @model_validator(mode="after")
    def _check_poses(self):
        if not self.poses[0].is_identity:
            raise ValueError("pose 0 must be the identity")
        labels = self.pose_labels()
        if len(set(labels)) != len(labels):
            raise ValueError(f"pose labels must be unique, got {labels}")
        return self

    @model_validator(mode="after")
    def _check_render_index(self):
        if self.render.index is None:
            return self
        nx, ny, nz = self.phantom.dims
        extent = {"xy": nz, "xz": ny, "yz": nx}
        for plane in self.render.planes:
            if self.render.index >= extent[plane]:
                raise ValueError(
                    f"render.index {self.render.index} outside the {plane} slice range [0, {extent[plane]})"
                )
        return self

    def pose_labels(self) -> List[str]:
        return [p.label or f"pose{k + 1}" for k, p in enumerate(self.poses)]


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{path}: {item['msg']}")
    return "; ".join(lines)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """
    Parse and validate a JSON experiment config.

    Args:
        text: JSON document
        source: Name used in error messages

    Returns:
        ExperimentConfig: The validated config

    Raises:
        ExperimentConfigError: With line/column for syntax errors or dotted field paths
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ExperimentConfigError(f"{source}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ExperimentConfigError(f"{source}: {_format_validation_error(e)}") from e


def load_config(
    path: Optional[Union[str, os.PathLike]] = None,
    out: Optional[str] = None,
    seed: Optional[int] = None,
) -> ExperimentConfig:
    """
    Load a config file and apply command-line overrides.

    Args:
        path: JSON config file; None uses the built-in desk-scale defaults
        out: Overrides ``output_dir``
        seed: Overrides ``noise.seed``

    Returns:
        ExperimentConfig: The effective config
    """
    if path is None:
        cfg = ExperimentConfig()
    else:
        path = Path(path)
        if not path.exists():
            raise ExperimentConfigError(f"Config file not found: {path}")
        logger.info(f"Loading config from {path}")
        cfg = parse_config(path.read_text(), source=str(path))

    if out is None and seed is None:
        return cfg

    data = cfg.model_dump()
    if out is not None:
        data["output_dir"] = str(out)
    if seed is not None:
        data["noise"]["seed"] = seed
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ExperimentConfigError(f"override: {_format_validation_error(e)}") from e


def dump_config(cfg: ExperimentConfig) -> str:
    return cfg.model_dump_json(indent=2) + "\n"
