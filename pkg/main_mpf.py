#!/usr/bin/env python3
"""
Multi-Pose Fusion - sparse-view CT reconstruction from several object poses.

Runs the desk-scale multi-pose experiment stage by stage or end to end:
phantom generation, posed scan simulation, single-pose and fused reconstructions,
evaluation and slice rendering.
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

from src.config import load_config
from src.errors import (
    AgentError,
    ExperimentConfigError,
    MaceSolverError,
    ProxSolverError,
    SliceIndexError,
    VolumeFormatError,
)
from src.pipeline import ExperimentPipeline

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_IO = 3

SUBCOMMANDS = ("phantom", "simulate", "reconstruct", "evaluate", "render", "run-all")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpf",
        description="Multi-pose fusion CT reconstruction experiments",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS, help="Stage to run")
    parser.add_argument(
        "--config",
        "-c",
        type=str,
        help="JSON experiment config (default: built-in desk-scale experiment)"
    )
    parser.add_argument(
        "--out",
        "-o",
        type=str,
        help="Output directory (overrides output_dir in the config)"
    )
    parser.add_argument(
        "--seed",
        type=int,
        help="Noise seed (overrides noise.seed in the config)"
    )
    parser.add_argument(
        "--log-level",
        type=str,
        default=os.getenv("MPF_LOG_LEVEL", "INFO"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: MPF_LOG_LEVEL from .env or INFO)"
    )
    return parser


def run_stage(pipeline: ExperimentPipeline, subcommand: str) -> int:
    """Run one stage; returns the exit code."""
    if subcommand == "phantom":
        pipeline.make_phantom()
        print(f"Phantom written to {pipeline.phantom_path}")
    elif subcommand == "simulate":
        pipeline.simulate()
        print(f"Sinograms written to {pipeline.output_dir / 'sinograms'}")
    elif subcommand == "reconstruct":
        results = pipeline.reconstruct()
        pipeline.plot_reports(results)
        for result in results:
            print(f"  {result.label}: {result.status} after {result.iterations} iterations")
        if any(r.failed for r in results):
            return EXIT_SOLVER
    elif subcommand == "evaluate":
        table = pipeline.evaluate()
        print(table.to_text())
        if any(r.failed for r in table.rows):
            return EXIT_SOLVER
    elif subcommand == "render":
        paths = pipeline.render()
        print(f"Rendered {len(paths)} slices")
    else:
        table = pipeline.run_all()
        print(table.to_text())
        print(f"Outputs saved to {pipeline.output_dir}")
        if any(r.failed for r in table.rows):
            return EXIT_SOLVER
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point of the mpf command line."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        cfg = load_config(args.config, out=args.out, seed=args.seed)
        pipeline = ExperimentPipeline(cfg)
        return run_stage(pipeline, args.subcommand)
    except ExperimentConfigError as e:
        print(f"Config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SliceIndexError as e:
        print(f"Config error: render.index: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (VolumeFormatError, OSError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (MaceSolverError, ProxSolverError, AgentError) as e:
        print(f"Solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
