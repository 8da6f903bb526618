"""End-to-end tests of the experiment pipeline and the mpf command line."""
import json
import math
from pathlib import Path

import numpy as np
import pytest

import main_mpf
from src.config import (
    BallFeature,
    ExperimentConfig,
    GeometrySpec,
    PhantomSpec,
    PoseSpec,
    SolverSpec,
    dump_config,
    load_config,
)
from src.errors import SliceIndexError
from src.inference import PRIOR_ROLE
from src.pipeline import MBIR, MPF, PNP, ExperimentPipeline, run_experiment

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
RUN_LABELS = ["mbir_pose1", "mbir_pose2", "pnp_pose1", "pnp_pose2", "mpf_all"]


def tiny_config(output_dir, **overrides) -> ExperimentConfig:
    """Two-pose experiment small enough to run in a few seconds."""
    params = dict(
        phantom=PhantomSpec(dims=(8, 8, 8), features=[BallFeature(radius=3.0, value=0.02)]),
        geometry=GeometrySpec(num_views=6, det_rows=12, det_channels=12),
        solver=SolverSpec(max_iters=4, cg_max_iters=10, conv_tol=1e-12),
        output_dir=str(output_dir),
    )
    params.update(overrides)
    return ExperimentConfig(**params)


class BrokenDenoiser:
    role = PRIOR_ROLE
    label = "broken"

    def __call__(self, v):
        raise FloatingPointError("denoiser produced NaN")


def test_run_all_writes_every_artifact(tmp_path):
    out = tmp_path / "exp"
    table = run_experiment(tiny_config(out))

    assert [(r.method, r.pose) for r in table.rows] == [
        (MBIR, "pose1"), (MBIR, "pose2"), (PNP, "pose1"), (PNP, "pose2"), (MPF, "all"),
    ]
    assert all(math.isfinite(r.nrmse) and not r.failed for r in table.rows)
    # an all-zero estimate scores exactly 1
    assert all(r.nrmse < 1.0 for r in table.rows)
    assert all(r.iterations == 4 for r in table.rows)

    for name in ["config.json", "phantom.mpfv", "results.txt", "results.csv", "transform_report.txt",
                 "sinograms/pose1.mpfs", "sinograms/pose2.mpfs", "renders/phantom_xy_004.png"]:
        assert (out / name).exists(), name
    for label in RUN_LABELS:
        run_dir = out / "runs" / label
        for name in ["recon.mpfv", "convergence.txt", "convergence.png", "run.json", f"{label}_yz_004.png"]:
            assert (run_dir / name).exists(), f"{label}/{name}"
        assert json.loads((run_dir / "run.json").read_text())["status"] == "max_iters"

    assert load_config(out / "config.json") == tiny_config(out)
    results = (out / "results.txt").read_text()
    assert "MBIR rows are MACE reconstructions" in results
    assert "pose asymmetry (PnP)" in results


def test_runs_are_reproducible(tmp_path):
    first = run_experiment(tiny_config(tmp_path / "a"))
    second = run_experiment(tiny_config(tmp_path / "b"))

    assert first.to_text() == second.to_text()
    assert (tmp_path / "a" / "results.txt").read_bytes() == (tmp_path / "b" / "results.txt").read_bytes()
    for label in RUN_LABELS:
        recon = Path("runs") / label / "recon.mpfv"
        assert (tmp_path / "a" / recon).read_bytes() == (tmp_path / "b" / recon).read_bytes()


def test_single_pose_fusion_equals_pnp(tmp_path):
    cfg = tiny_config(tmp_path, poses=[PoseSpec(label="pose1")])
    table = run_experiment(cfg)

    assert table.row(MPF, "all").nrmse == table.row(PNP, "pose1").nrmse
    assert table.asymmetry == []


def test_failed_row_does_not_stop_the_others(tmp_path, monkeypatch):
    original = ExperimentPipeline.prior_agents

    def prior_agents(self, method):
        return [BrokenDenoiser()] if method == MBIR else original(self, method)

    monkeypatch.setattr(ExperimentPipeline, "prior_agents", prior_agents)
    table = run_experiment(tiny_config(tmp_path))

    assert table.row(MBIR, "pose1").failed
    assert math.isnan(table.row(MBIR, "pose2").nrmse)
    assert not table.row(MPF, "all").failed
    assert math.isfinite(table.row(MPF, "all").nrmse)
    assert "failed: mbir_pose1" in (tmp_path / "results.txt").read_text()
    assert "status: failed" in (tmp_path / "runs" / "mbir_pose1" / "convergence.txt").read_text()


def test_backprojection_initial_estimate(tmp_path):
    cfg = tiny_config(tmp_path, solver=SolverSpec(max_iters=2, init="backprojection"))
    pipeline = ExperimentPipeline(cfg)
    pipeline.make_phantom()
    sinograms = pipeline.simulate()

    x0 = pipeline.initial_estimate(sinograms, (0, 1))
    assert x0.dims == (8, 8, 8)
    assert np.all(np.isfinite(x0.data))
    assert x0.data[4, 4, 4] > x0.data[0, 0, 0]
    assert pipeline.auto_sigma(sinograms[0]) > 0


def test_transform_report_lists_rotated_poses(tmp_path):
    pipeline = ExperimentPipeline(tiny_config(tmp_path))
    report = pipeline.transform_report()

    assert [(e["pose"], e["interp"]) for e in report.entries] == [
        ("pose2", "trilinear"), ("pose2", "cubic_bspline"),
    ]
    assert "roundtrip_error" in (tmp_path / "transform_report.txt").read_text()


# Command line

def test_cli_stages(tmp_path):
    config_path = tmp_path / "tiny.json"
    config_path.write_text(dump_config(tiny_config(tmp_path / "unused")))
    out = tmp_path / "cli"
    args = ["--config", str(config_path), "--out", str(out)]

    for stage in ["phantom", "simulate", "reconstruct", "evaluate", "render"]:
        assert main_mpf.main([stage] + args) == main_mpf.EXIT_OK, stage

    assert (out / "results.txt").exists()
    assert not (tmp_path / "unused").exists()


def test_cli_exit_codes(tmp_path):
    assert main_mpf.main(["run-all", "--config", str(tmp_path / "missing.json")]) == main_mpf.EXIT_CONFIG

    bad = tmp_path / "bad.json"
    bad.write_text('{"solver": {"rho": 2.0}}')
    assert main_mpf.main(["phantom", "--config", str(bad)]) == main_mpf.EXIT_CONFIG

    assert main_mpf.main(["evaluate", "--out", str(tmp_path / "empty")]) == main_mpf.EXIT_IO


def test_cli_rejects_render_index_outside_the_volume(tmp_path, capsys):
    config_path = tmp_path / "index.json"
    config = json.loads(dump_config(tiny_config(tmp_path / "out")))
    config["render"]["index"] = 8
    config_path.write_text(json.dumps(config))

    assert main_mpf.main(["render", "--config", str(config_path)]) == main_mpf.EXIT_CONFIG
    assert "render.index 8" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_cli_maps_slice_errors_to_config_exit_code(tmp_path, monkeypatch, capsys):
    config_path = tmp_path / "tiny.json"
    config_path.write_text(dump_config(tiny_config(tmp_path / "out")))

    def render(self):
        raise SliceIndexError("xy slice index 12 outside [0, 8)")

    monkeypatch.setattr(ExperimentPipeline, "render", render)

    assert main_mpf.main(["render", "--config", str(config_path)]) == main_mpf.EXIT_CONFIG
    assert "Config error: render.index: xy slice index 12" in capsys.readouterr().err


@pytest.mark.slow
def test_desk_scale_fusion_beats_single_pose(tmp_path):
    """Fusing both poses improves on the best single-pose reconstruction."""
    cfg = load_config(CONFIG_DIR / "desk_scale.json", out=str(tmp_path))
    table = run_experiment(cfg)

    best_single = min(r.nrmse for r in table.single_pose_rows())
    assert table.row(MPF, "all").nrmse < 0.95 * best_single
    assert {check.method for check in table.asymmetry} == {MBIR, PNP}
    assert not any(check.asymmetry_violation for check in table.asymmetry)


@pytest.mark.slow
def test_noiseless_dense_view_reconstructions_are_accurate(tmp_path):
    """Without noise and with 90 views every method recovers the phantom closely."""
    data = load_config(CONFIG_DIR / "desk_scale.json", out=str(tmp_path)).model_dump()
    data["geometry"]["num_views"] = 90
    data["noise"]["alpha"] = 0.0
    cfg = ExperimentConfig.model_validate(data)
    assert cfg.noise.is_noiseless

    table = run_experiment(cfg)

    for row in table.rows:
        assert not row.failed, row
        assert row.nrmse < 0.05, (row.method, row.pose, row.nrmse)
