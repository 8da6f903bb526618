"""Conjugate gradient solver for symmetric positive definite operators."""
import logging
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

from ..errors import ProxSolverError

logger = logging.getLogger(__name__)


@dataclass
class CGResult:
    """Solution and residual trace of a conjugate gradient solve."""
    x: np.ndarray
    iterations: int
    residuals: List[float] = field(default_factory=list)
    converged: bool = False


def conjugate_gradient(
    apply_op: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    x0: np.ndarray,
    tol: float = 1e-6,
    max_iters: int = 50,
    divergence_window: int = 5,
) -> CGResult:
    """
    Solve ``apply_op(x) = rhs`` by conjugate gradient, warm-started at ``x0``.

    Stops when the relative residual ||rhs - Ax|| / ||rhs|| drops below ``tol``
    (confirmed on the explicitly recomputed residual) or after ``max_iters``.

    Args:
        apply_op: Symmetric positive definite linear operator on flat arrays
        rhs: Right-hand side
        x0: Initial guess
        tol: Relative residual tolerance
        max_iters: Maximum number of CG iterations
        divergence_window: Consecutive residual increases treated as divergence

    Returns:
        CGResult: Solution, iteration count and relative residual trace

    Raises:
        ProxSolverError: If the residual grows for ``divergence_window`` consecutive
            iterations or the operator shows non-positive curvature
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    b_norm = np.linalg.norm(rhs)
    if b_norm == 0:
        return CGResult(x=np.zeros_like(x), iterations=0, residuals=[0.0], converged=True)

    r = rhs - apply_op(x)
    rs = float(r @ r)
    residuals = [np.sqrt(rs) / b_norm]
    if residuals[-1] < tol:
        return CGResult(x=x, iterations=0, residuals=residuals, converged=True)

    p = r.copy()
    growth = 0
    for iteration in range(1, max_iters + 1):
        ap = apply_op(p)
        curvature = float(p @ ap)
        if curvature <= 0:
            raise ProxSolverError(
                f"non-positive curvature {curvature:.3e} at CG iteration {iteration}", residuals
            )
        alpha = rs / curvature
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        rel = np.sqrt(rs_new) / b_norm

        growth = growth + 1 if rel > residuals[-1] else 0
        residuals.append(rel)
        if growth >= divergence_window:
            raise ProxSolverError(
                f"CG residual grew for {growth} consecutive iterations (last {rel:.3e})", residuals
            )

        if rel < tol:
            # the recursive residual drifts; confirm against the true one
            r = rhs - apply_op(x)
            rs_new = float(r @ r)
            rel = np.sqrt(rs_new) / b_norm
            residuals[-1] = rel
            if rel < tol:
                return CGResult(x=x, iterations=iteration, residuals=residuals, converged=True)
            p = r.copy()
            rs = rs_new
            continue

        p = r + (rs_new / rs) * p
        rs = rs_new

    logger.debug(f"CG stopped at max_iters={max_iters} with relative residual {residuals[-1]:.3e}")
    return CGResult(x=x, iterations=max_iters, residuals=residuals, converged=False)
