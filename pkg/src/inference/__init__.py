"""Inference modules: CG solver, denoisers, MACE agents and the Mann solver."""

from .conjugate_gradient import CGResult, conjugate_gradient
from .denoisers import (
    DENOISER_METHODS,
    PLANE_AXES,
    DenoiserConfig,
    TVTrace,
    denoise_slicewise,
    gaussian_denoise,
    tv_denoise,
)
from .agents import (
    DATA_ROLE,
    PRIOR_ROLE,
    ConjugateDataProxAgent,
    DataProxAgent,
    DenoiserAgent,
    ProxConfig,
    conjugate_prox_data,
    multislice_denoisers,
    prox_data,
    solve_prox,
)
from .mace import (
    ConvergenceReport,
    SolverConfig,
    StackedState,
    apply_F,
    apply_G,
    equilibrium_residual,
    make_weights,
    mann_solve,
    weights_for_agents,
)

__all__ = [
    'CGResult', 'conjugate_gradient',
    'DENOISER_METHODS', 'PLANE_AXES', 'DenoiserConfig', 'TVTrace', 'denoise_slicewise', 'gaussian_denoise',
    'tv_denoise',
    'DATA_ROLE', 'PRIOR_ROLE', 'ConjugateDataProxAgent', 'DataProxAgent', 'DenoiserAgent', 'ProxConfig',
    'conjugate_prox_data', 'multislice_denoisers', 'prox_data', 'solve_prox',
    'ConvergenceReport', 'SolverConfig', 'StackedState', 'apply_F', 'apply_G', 'equilibrium_residual',
    'make_weights', 'mann_solve', 'weights_for_agents',
]
