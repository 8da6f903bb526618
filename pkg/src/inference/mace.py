"""Multi-agent consensus equilibrium (MACE) solved by Mann iteration."""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core import Volume, check_same_grid
from ..errors import AgentError, MaceSolverError
from .agents import DATA_ROLE, PRIOR_ROLE

logger = logging.getLogger(__name__)

Agent = Callable[[Volume], Volume]

CONVERGED = "converged"
MAX_ITERS = "max_iters"
FAILED = "failed"


def make_weights(K: int, beta: float, num_priors: int = 3) -> np.ndarray:
    """
    Agent weights mu for K data agents followed by ``num_priors`` prior agents.

    Data agents get 1/(K(1+beta)) each and priors beta/(num_priors(1+beta)) each,
    so the weights sum to one.

    Args:
        K: Number of data agents, >= 1
        beta: Prior/data balance, > 0
        num_priors: Number of prior agents (3 for multi-slice fusion, 1 for plain PnP)

    Returns:
        np.ndarray: Weights of length K + num_priors
    """
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if num_priors < 1:
        raise ValueError(f"num_priors must be at least 1, got {num_priors}")
    data_weight = 1.0 / (K * (1.0 + beta))
    prior_weight = beta / (num_priors * (1.0 + beta))
    return np.array([data_weight] * K + [prior_weight] * num_priors)


@dataclass
class StackedState:
    """MACE state w: one volume per agent and the agent weights mu."""
    components: List[Volume]
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if len(self.components) != len(self.weights):
            raise ValueError(f"{len(self.components)} components but {len(self.weights)} weights")
        if len(self.components) == 0:
            raise ValueError("StackedState needs at least one component")
        if np.any(self.weights < 0):
            raise ValueError("agent weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"agent weights must sum to 1, got {self.weights.sum():.15f}")
        for comp in self.components[1:]:
            check_same_grid(self.components[0], comp)

    @classmethod
    def replicate(cls, x: Volume, weights: np.ndarray) -> "StackedState":
        return cls([x] * len(weights), weights)

    def average(self) -> Volume:
        """Weighted average sum_k mu_k w_k."""
        total = np.zeros_like(self.components[0].data)
        for mu, comp in zip(self.weights, self.components):
            total += mu * comp.data
        return self.components[0].with_data(total)

    def stacked_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(c.data ** 2) for c in self.components)))


@dataclass
class ConvergenceReport:
    """Per-iteration diagnostics of a Mann solve."""
    residuals: List[float] = field(default_factory=list)
    disagreements: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)
    status: str = MAX_ITERS
    monotone_violations: List[int] = field(default_factory=list)
    history: List[Volume] = field(default_factory=list)
    # state w at which the agents were last evaluated
    final_state: Optional[StackedState] = None

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    def record(self, residual: float, disagreement: float, seconds: float) -> None:
        self.residuals.append(float(residual))
        self.disagreements.append(float(disagreement))
        self.seconds.append(float(seconds))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "iteration": np.arange(1, self.iterations + 1),
            "residual": self.residuals,
            "disagreement": self.disagreements,
            "seconds": self.seconds,
        })

    def to_table(self) -> str:
        """Plain-text table (iteration, residual, disagreement, seconds) plus the status."""
        frame = self.to_frame()
        body = frame.to_string(
            index=False,
            formatters={
                "residual": "{:.6e}".format,
                "disagreement": "{:.6e}".format,
                "seconds": "{:.3f}".format,
            },
        ) if self.iterations else "(no iterations)"
        return f"{body}\nstatus: {self.status}\n"


@dataclass(frozen=True)
class SolverConfig:
    """Mann iteration settings."""
    rho: float = 0.5
    beta: float = 1.0
    max_iters: int = 50
    conv_tol: float = 1e-4
    record_history: bool = False
    workers: int = 1
    burn_in: int = 5

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")
        if not self.conv_tol > 0:
            raise ValueError(f"conv_tol must be positive, got {self.conv_tol}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")


def weights_for_agents(agents: Sequence[Agent], beta: float) -> np.ndarray:
    """Derive mu from the agents' roles; data agents must precede prior agents."""
    roles = [getattr(agent, "role", None) for agent in agents]
    if any(role not in (DATA_ROLE, PRIOR_ROLE) for role in roles):
        raise ValueError("every agent needs a 'data' or 'prior' role to derive weights; pass weights explicitly")
    K = roles.count(DATA_ROLE)
    if roles != [DATA_ROLE] * K + [PRIOR_ROLE] * (len(roles) - K):
        raise ValueError("data agents must come before prior agents")
    return make_weights(K, beta, num_priors=len(roles) - K)


def apply_G(state: StackedState) -> StackedState:
    """Replace every component by the weighted average w_bar."""
    w_bar = state.average()
    return StackedState([w_bar] * len(state.components), state.weights)


def _evaluate(index: int, agent: Agent, v: Volume) -> Volume:
    try:
        out = agent(v)
    except Exception as e:
        raise AgentError(index, getattr(agent, "label", type(agent).__name__), e) from e
    if out.dims != v.dims:
        raise AgentError(index, getattr(agent, "label", type(agent).__name__),
                         ValueError(f"output dims {out.dims} differ from input {v.dims}"))
    return out


def apply_F(state: StackedState, agents: Sequence[Agent], workers: int = 1) -> StackedState:
    """
    Apply agent k to component k, optionally on a thread pool.

    Results are gathered by index, so they do not depend on scheduling.

    Args:
        state: Current stacked state
        agents: One agent per component
        workers: Number of concurrent agent evaluations

    Returns:
        StackedState: [F_0(w_0), ..., F_n(w_n)] with the same weights

    Raises:
        AgentError: Tagged with the index of the failing agent
    """
    if len(agents) != len(state.components):
        raise ValueError(f"{len(agents)} agents for {len(state.components)} components")

    jobs = list(zip(range(len(agents)), agents, state.components))
    if workers <= 1:
        outputs = [_evaluate(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_evaluate, *job) for job in jobs]
            outputs = [f.result() for f in futures]
    return StackedState(outputs, state.weights)


def equilibrium_residual(state: StackedState, agents: Sequence[Agent], workers: int = 1) -> float:
    """||G(F(w)) - F(w)|| / ||F(w)|| over the stacked state."""
    fw = apply_F(state, agents, workers)
    gfw = apply_G(fw)
    diff = np.sqrt(sum(np.sum((a.data - b.data) ** 2) for a, b in zip(gfw.components, fw.components)))
    denom = fw.stacked_norm()
    return float(diff / denom) if denom > 0 else float(diff)


def _disagreement(x: StackedState, x_bar: Volume) -> float:
    bar_norm = np.linalg.norm(x_bar.data)
    spread = max(np.linalg.norm(c.data - x_bar.data) for c in x.components)
    return float(spread / bar_norm) if bar_norm > 0 else float(spread)


def mann_solve(
    x0: Volume,
    agents: Sequence[Agent],
    cfg: SolverConfig,
    weights: Optional[np.ndarray] = None,
) -> Tuple[Volume, ConvergenceReport]:
    """
    Solve the MACE equation F(w) = G(w) with Mann iteration.

    Each iteration computes x = F(w), z = G(2x - w) and w <- w + 2 rho (z - x), which
    is w <- (1 - rho) w + rho (2G - I)(2F - I) w. The loop stops when the relative
    update ||w+ - w|| / ||w|| falls below ``cfg.conv_tol`` or after ``cfg.max_iters``.

    Args:
        x0: Initial reconstruction replicated into every component
        agents: Data agents first, then prior agents
        cfg: Solver settings
        weights: Agent weights mu; derived from agent roles and beta when omitted

    Returns:
        Tuple of x* = sum_k mu_k x_k from the final F evaluation, and the report

    Raises:
        MaceSolverError: If an agent fails; carries the partial report
    """
    if weights is None:
        weights = weights_for_agents(agents, cfg.beta)
    w = StackedState.replicate(x0, weights)
    report = ConvergenceReport()
    x_star = x0

    logger.info(f"Starting Mann iteration with {len(agents)} agents, rho={cfg.rho}, "
                f"max_iters={cfg.max_iters}, conv_tol={cfg.conv_tol:.1e}")

    for iteration in range(1, cfg.max_iters + 1):
        start = time.perf_counter()
        try:
            x = apply_F(w, agents, cfg.workers)
        except AgentError as e:
            report.status = FAILED
            logger.error(f"Mann iteration {iteration} aborted: {e}")
            raise MaceSolverError(f"Mann iteration {iteration} aborted: {e}", report) from e

        x_bar = x.average()
        w_bar = w.average()
        z_bar = 2.0 * x_bar.data - w_bar.data

        update_sq = 0.0
        new_components = []
        for x_k, w_k in zip(x.components, w.components):
            step = 2.0 * cfg.rho * (z_bar - x_k.data)
            update_sq += float(np.sum(step ** 2))
            new_components.append(w_k.with_data(w_k.data + step))
        w_new = StackedState(new_components, w.weights)

        # a zero state (zeros init) is measured against the updated state instead
        denom = w.stacked_norm() or w_new.stacked_norm()
        residual = np.sqrt(update_sq) / denom if denom > 0 else 0.0
        report.record(residual, _disagreement(x, x_bar), time.perf_counter() - start)
        if cfg.record_history:
            report.history.append(x_bar)

        if iteration > cfg.burn_in and residual > report.residuals[-2] * (1 + 1e-12):
            if not report.monotone_violations:
                logger.warning(f"Mann residual increased at iteration {iteration} "
                               f"({report.residuals[-2]:.3e} -> {residual:.3e})")
            report.monotone_violations.append(iteration)

        logger.debug(f"Mann iteration {iteration}: residual={residual:.3e}, "
                     f"disagreement={report.disagreements[-1]:.3e}")
        x_star = x_bar
        report.final_state = w
        w = w_new
        if residual < cfg.conv_tol:
            report.status = CONVERGED
            break

    logger.info(f"Mann iteration finished: status={report.status}, iterations={report.iterations}, "
                f"residual={report.residuals[-1]:.3e}")
    return x_star, report
