"""Multi-pose fusion experiment: phantom, posed scans, reconstructions, evaluation and renders."""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .config import ExperimentConfig, dump_config
from .core import GridSpec, Volume, nrmse, read_volume, write_volume
from .errors import MaceSolverError, MPFError
from .forward_model import (
    RigidPose,
    Sinogram,
    apply_pose,
    back_project,
    inverse_pose,
    normal_diagonal,
    read_sinogram,
    roundtrip_error,
    write_sinogram,
)
from .inference import (
    ConjugateDataProxAgent,
    ConvergenceReport,
    DenoiserAgent,
    ProxConfig,
    make_weights,
    mann_solve,
)
from .preprocessing import generate_phantom, simulate_pose_scan
from .visualization import plot_convergence, render_slice

logger = logging.getLogger(__name__)

MBIR = "MBIR"
PNP = "PnP"
MPF = "MPF"
ALL_POSES = "all"
FAILED = "failed"

MBIR_CAPTION = ("MBIR rows are MACE reconstructions with a single 3D TV prior agent, "
                "standing in for qGGMRF model-based iterative reconstruction.")

# Relative excess of the identity-pose NRMSE over a rotated pose that marks a violation
ASYMMETRY_TOLERANCE = 0.2


@dataclass(frozen=True)
class RunSpec:
    """One reconstruction row: a method and the poses whose data agents it uses."""
    method: str
    pose: str
    pose_indices: tuple

    @property
    def label(self) -> str:
        return f"{self.method.lower()}_{self.pose}"


@dataclass
class RunResult:
    """Outcome of one reconstruction row."""
    method: str
    pose: str
    status: str
    iterations: int = 0
    nrmse: float = float("nan")
    error: Optional[str] = None
    recon: Optional[Volume] = None
    report: Optional[ConvergenceReport] = None

    @property
    def label(self) -> str:
        return f"{self.method.lower()}_{self.pose}"

    @property
    def failed(self) -> bool:
        return self.status == FAILED


@dataclass
class AsymmetryCheck:
    """Identity-pose versus rotated-pose single-pose NRMSE for one method."""
    method: str
    reference_pose: str
    rotated_pose: str
    reference_nrmse: float
    rotated_nrmse: float

    @property
    def relative_excess(self) -> float:
        return (self.reference_nrmse - self.rotated_nrmse) / self.rotated_nrmse

    @property
    def violated(self) -> bool:
        return self.reference_nrmse > self.rotated_nrmse

    @property
    def asymmetry_violation(self) -> bool:
        return self.relative_excess > ASYMMETRY_TOLERANCE


@dataclass
class ResultsTable:
    """NRMSE per (method, pose) row, laid out with single-pose rows first and MPF last."""
    rows: List[RunResult]
    caption: str = MBIR_CAPTION
    asymmetry: List[AsymmetryCheck] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.method, r.pose, r.nrmse, r.status, r.iterations) for r in self.rows],
            columns=["method", "pose", "nrmse", "status", "iterations"],
        )

    def row(self, method: str, pose: str) -> RunResult:
        for r in self.rows:
            if r.method == method and r.pose == pose:
                return r
        raise KeyError(f"No row for {method} / {pose}")

    def single_pose_rows(self) -> List[RunResult]:
        return [r for r in self.rows if r.method != MPF]

    def to_text(self) -> str:
        """Deterministic plain-text rendering (no timings)."""
        body = self.to_frame().to_string(index=False, formatters={"nrmse": "{:.6f}".format})
        lines = ["NRMSE of reconstructions against the phantom", self.caption, "", body]
        failed = [r for r in self.rows if r.failed]
        if failed:
            lines.append("")
            lines.extend(f"failed: {r.label}: {r.error}" for r in failed)
        if self.asymmetry:
            lines.append("")
            for check in self.asymmetry:
                lines.append(
                    f"pose asymmetry ({check.method}): {check.reference_pose} {check.reference_nrmse:.6f} "
                    f"vs {check.rotated_pose} {check.rotated_nrmse:.6f}"
                    + (" asymmetry_violation" if check.asymmetry_violation else
                       " violated" if check.violated else " ok")
                )
        return "\n".join(lines) + "\n"

    def write(self, path: Path) -> Path:
        path.write_text(self.to_text())
        return path


@dataclass
class TransformReport:
    """Interior round-trip error T^-1 T x - x of the phantom for every rotated pose."""
    entries: List[Dict]

    def to_text(self) -> str:
        if not self.entries:
            return "no rotated poses\n"
        frame = pd.DataFrame(self.entries, columns=["pose", "interp", "margin", "roundtrip_error"])
        return frame.to_string(index=False, formatters={"roundtrip_error": "{:.6e}".format}) + "\n"


def check_pose_asymmetry(table: ResultsTable, pose_labels: Sequence[str]) -> List[AsymmetryCheck]:
    """Compare the identity-pose row with each rotated-pose row of every single-pose method."""
    checks = []
    reference = pose_labels[0]
    for method in (MBIR, PNP):
        for rotated in pose_labels[1:]:
            try:
                ref_row, rot_row = table.row(method, reference), table.row(method, rotated)
            except KeyError:
                continue
            if ref_row.failed or rot_row.failed:
                continue
            check = AsymmetryCheck(method, reference, rotated, ref_row.nrmse, rot_row.nrmse)
            if check.violated:
                logger.warning(f"{method}: identity pose NRMSE {check.reference_nrmse:.4f} exceeds "
                               f"{rotated} NRMSE {check.rotated_nrmse:.4f} ({check.relative_excess:+.1%})")
            checks.append(check)
    return checks


class ExperimentPipeline:
    """
    Runs the multi-pose experiment stage by stage.

    Every stage reads its inputs from and writes its outputs to the output
    directory, so stages can also be run separately from the command line.
    """

    def __init__(self, cfg: ExperimentConfig, output_dir: Optional[str] = None):
        """
        Args:
            cfg: Validated experiment config
            output_dir: Overrides ``cfg.output_dir``
        """
        self.cfg = cfg
        self.output_dir = Path(output_dir or cfg.output_dir)
        self.pose_labels = cfg.pose_labels()
        self.geometry = cfg.geometry.to_geometry()

    # Layout

    @property
    def phantom_path(self) -> Path:
        return self.output_dir / "phantom.mpfv"

    def sinogram_path(self, k: int) -> Path:
        return self.output_dir / "sinograms" / f"{self.pose_labels[k]}.mpfs"

    def run_dir(self, label: str) -> Path:
        return self.output_dir / "runs" / label

    def grid(self) -> GridSpec:
        spec = self.cfg.phantom
        origin = tuple(-0.5 * (n - 1) * spec.voxel_size for n in spec.dims)
        return GridSpec(dims=tuple(spec.dims), voxel_size=spec.voxel_size, origin=origin)

    def simulation_pose(self, k: int) -> RigidPose:
        return self.cfg.poses[k].to_pose(self.cfg.simulation_interp)

    def reconstruction_pose(self, k: int) -> RigidPose:
        return self.cfg.poses[k].to_pose(self.cfg.solver.interp)

    def run_specs(self) -> List[RunSpec]:
        """Table layout: MBIR per pose, PnP per pose, then MPF over all poses."""
        specs = [RunSpec(MBIR, label, (k,)) for k, label in enumerate(self.pose_labels)]
        specs += [RunSpec(PNP, label, (k,)) for k, label in enumerate(self.pose_labels)]
        specs.append(RunSpec(MPF, ALL_POSES, tuple(range(len(self.pose_labels)))))
        return specs

    # Stages

    def make_phantom(self) -> Volume:
        """Generate the phantom and write it to ``phantom.mpfv``."""
        logger.info("Generating phantom...")
        phantom = generate_phantom(self.cfg.phantom)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        write_volume(self.phantom_path, phantom)
        return read_volume(self.phantom_path)

    def load_phantom(self) -> Volume:
        if not self.phantom_path.exists():
            return self.make_phantom()
        return read_volume(self.phantom_path)

    def simulate(self) -> List[Sinogram]:
        """Simulate one scan per pose and write them under ``sinograms/``."""
        phantom = self.load_phantom()
        noise = self.cfg.noise
        sinograms = []
        for k, label in enumerate(self.pose_labels):
            logger.info(f"Simulating {label} scan...")
            seed = None if noise.seed is None else noise.seed + k
            sino = simulate_pose_scan(
                phantom, self.simulation_pose(k), self.geometry,
                alpha=noise.alpha, seed=seed, snr_db=noise.snr_db,
            )
            path = self.sinogram_path(k)
            path.parent.mkdir(parents=True, exist_ok=True)
            write_sinogram(path, sino)
            sinograms.append(read_sinogram(path))
        return sinograms

    def load_sinograms(self) -> List[Sinogram]:
        return [read_sinogram(self.sinogram_path(k)) for k in range(len(self.pose_labels))]

    def auto_sigma(self, sino: Sinogram) -> float:
        """sigma with 1/sigma^2 equal to the mean diagonal of A^T Lambda A."""
        if self.cfg.solver.sigma is not None:
            return self.cfg.solver.sigma
        mean_diag = float(np.mean(normal_diagonal(self.grid(), sino.geometry, sino.weights).data))
        return 1.0 / np.sqrt(mean_diag)

    def data_agent(self, k: int, sino: Sinogram) -> ConjugateDataProxAgent:
        solver = self.cfg.solver
        prox = ProxConfig(sino, self.auto_sigma(sino), cg_tol=solver.cg_tol, cg_max_iters=solver.cg_max_iters)
        return ConjugateDataProxAgent(prox, self.reconstruction_pose(k), label=self.pose_labels[k])

    def prior_agents(self, method: str) -> List[DenoiserAgent]:
        denoiser = self.cfg.denoiser
        if method == MBIR:
            return [DenoiserAgent(denoiser.mbir_config())]
        if method == PNP and self.cfg.solver.single_prior_pnp:
            return [DenoiserAgent(denoiser.plane_config("xy"))]
        return [DenoiserAgent(denoiser.plane_config(plane)) for plane in ("xy", "xz", "yz")]

    def initial_estimate(self, sinograms: Sequence[Sinogram], pose_indices: Sequence[int]) -> Volume:
        """Zeros, or the pose-aligned normalized back projection sum_k T_k^-1 A^T y_k / sum_k T_k^-1 A^T 1."""
        grid = self.grid()
        if self.cfg.solver.init == "zeros":
            return Volume.zeros(grid)

        numerator = np.zeros(grid.shape)
        denominator = np.zeros(grid.shape)
        for k in pose_indices:
            back = inverse_pose(self.reconstruction_pose(k))
            sino = sinograms[k]
            numerator += apply_pose(back_project(sino, grid), back).data
            denominator += apply_pose(back_project(sino.with_data(np.ones(sino.data.shape)), grid), back).data
        x0 = np.divide(numerator, denominator, out=np.zeros(grid.shape), where=denominator > 1e-12)
        return Volume(x0, grid.voxel_size, grid.origin)

    def reconstruct_one(self, spec: RunSpec, sinograms: Sequence[Sinogram]) -> RunResult:
        """Run one MACE reconstruction and write its volume, convergence log and status."""
        logger.info(f"Reconstructing {spec.label}...")
        run_dir = self.run_dir(spec.label)
        run_dir.mkdir(parents=True, exist_ok=True)
        try:
            data_agents = [self.data_agent(k, sinograms[k]) for k in spec.pose_indices]
            priors = self.prior_agents(spec.method)
            weights = make_weights(len(data_agents), self.cfg.solver.beta, num_priors=len(priors))
            x0 = self.initial_estimate(sinograms, spec.pose_indices)
            recon, report = mann_solve(x0, data_agents + priors, self.cfg.solver.to_solver_config(), weights)
        except MaceSolverError as e:
            logger.error(f"{spec.label} failed: {e}")
            result = RunResult(spec.method, spec.pose, FAILED, error=str(e), report=e.report)
        except Exception as e:
            logger.error(f"{spec.label} failed: {e}")
            result = RunResult(spec.method, spec.pose, FAILED, error=str(e))
        else:
            write_volume(run_dir / "recon.mpfv", recon)
            result = RunResult(spec.method, spec.pose, report.status, report.iterations, recon=recon, report=report)

        if result.report is not None:
            (run_dir / "convergence.txt").write_text(result.report.to_table())
        status = {"method": result.method, "pose": result.pose, "status": result.status,
                  "iterations": result.iterations, "error": result.error}
        (run_dir / "run.json").write_text(json.dumps(status, indent=2) + "\n")
        return result

    def reconstruct(self) -> List[RunResult]:
        """Reconstruct every row of the results table, ``run_workers`` rows at a time."""
        sinograms = self.load_sinograms()
        specs = self.run_specs()
        if self.cfg.run_workers <= 1:
            return [self.reconstruct_one(spec, sinograms) for spec in specs]
        with ThreadPoolExecutor(max_workers=self.cfg.run_workers) as pool:
            futures = [pool.submit(self.reconstruct_one, spec, sinograms) for spec in specs]
            return [f.result() for f in futures]

    def evaluate(self) -> ResultsTable:
        """Score every reconstruction against the phantom and write ``results.txt``."""
        phantom = read_volume(self.phantom_path)
        rows = []
        for spec in self.run_specs():
            run_dir = self.run_dir(spec.label)
            status_path = run_dir / "run.json"
            if not status_path.exists():
                rows.append(RunResult(spec.method, spec.pose, FAILED, error="not reconstructed"))
                continue
            status = json.loads(status_path.read_text())
            row = RunResult(spec.method, spec.pose, status["status"], status["iterations"], error=status["error"])
            if not row.failed:
                try:
                    row.recon = read_volume(run_dir / "recon.mpfv")
                    row.nrmse = nrmse(row.recon, phantom).nrmse
                except (MPFError, OSError) as e:
                    logger.error(f"Could not evaluate {spec.label}: {e}")
                    row.status, row.error = FAILED, str(e)
            rows.append(row)

        table = ResultsTable(rows)
        table.asymmetry = check_pose_asymmetry(table, self.pose_labels)
        table.write(self.output_dir / "results.txt")
        table.to_frame().to_csv(self.output_dir / "results.csv", index=False, float_format="%.6f")
        logger.info(f"Results written to {self.output_dir / 'results.txt'}")
        return table

    def transform_report(self) -> TransformReport:
        """Round-trip error of the phantom under every rotated pose, trilinear and cubic."""
        phantom = self.load_phantom()
        entries = []
        for k, label in enumerate(self.pose_labels):
            if self.cfg.poses[k].is_identity:
                continue
            for interp in ("trilinear", "cubic_bspline"):
                pose = self.cfg.poses[k].to_pose(interp)
                entries.append({"pose": label, "interp": interp, "margin": 3,
                                "roundtrip_error": roundtrip_error(phantom, pose, margin=3)})
        report = TransformReport(entries)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        (self.output_dir / "transform_report.txt").write_text(report.to_text())
        return report

    def render(self) -> List[Path]:
        """Render the configured slices of the phantom and of every reconstruction."""
        render = self.cfg.render
        volumes = {"phantom": (self.load_phantom(), self.output_dir / "renders")}
        for spec in self.run_specs():
            path = self.run_dir(spec.label) / "recon.mpfv"
            if path.exists():
                volumes[spec.label] = (read_volume(path), self.run_dir(spec.label))

        written = []
        for label, (volume, out_dir) in volumes.items():
            for plane in render.planes:
                written.append(render_slice(volume, plane, render.index, render.window, out_dir, label=label))
        return written

    def plot_reports(self, results: Sequence[RunResult]) -> None:
        for result in results:
            if result.report is not None and result.report.iterations:
                plot_convergence(result.report, self.run_dir(result.label) / "convergence.png", title=result.label)

    def run_all(self) -> ResultsTable:
        """
        Run every stage in order and write the effective config next to the outputs.

        Returns:
            ResultsTable: The evaluated results
        """
        self.output_dir.mkdir(parents=True, exist_ok=True)
        (self.output_dir / "config.json").write_text(dump_config(self.cfg))
        self.make_phantom()
        self.simulate()
        self.transform_report()
        results = self.reconstruct()
        self.plot_reports(results)
        table = self.evaluate()
        self.render()
        return table


def run_experiment(cfg: ExperimentConfig, output_dir: Optional[str] = None) -> ResultsTable:
    """
    Run the full multi-pose experiment.

    Args:
        cfg: Validated experiment config
        output_dir: Overrides ``cfg.output_dir``

    Returns:
        ResultsTable: NRMSE of every single-pose baseline and of the fused reconstruction
    """
    logger.info(f"Starting experiment with {len(cfg.poses)} poses in {output_dir or cfg.output_dir}")
    return ExperimentPipeline(cfg, output_dir).run_all()
